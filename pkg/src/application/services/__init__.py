"""Application services."""
from src.application.services.ablation_service import AblationService
from src.application.services.pipeline_service import PipelineService
from src.application.services.report_service import ReportService

__all__ = ["AblationService", "PipelineService", "ReportService"]
