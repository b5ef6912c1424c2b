"""Pipeline service: one end-to-end run from crowd to evaluated classifier."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import structlog

from src.application.commands import GenerateCommand, RunCommand
from src.application.dto import AnnotatorSummary, MetricsReport, RunResult, finite_or_none
from src.domain.crowdsim import CrowdDataset, generate_crowd
from src.domain.crowdtrain import (
    AnnotationTable,
    ClassifierNetwork,
    DsResult,
    aggregate_majority,
    dawid_skene_em,
    evaluate,
    noisy_agreement,
    source_transition_error,
    train_classifier,
    train_plain,
    transition_error,
    evaluation_pairs,
)
from src.domain.distill import DistilledSet, collect_distilled, train_warmup
from src.domain.exceptions import PipelineError
from src.domain.graphtransfer import (
    GcnMapper,
    GcnTransition,
    SimilarityGraph,
    build_graph,
    graph_recovery,
    train_gcn,
)
from src.domain.transition import (
    GlobalHead,
    IndividualHeads,
    TransitionNetwork,
    TransitionSource,
    finetune_all,
    train_global,
)
from src.domain.value_objects import METHOD_HEAD_SOURCE, HeadSource, Method
from src.infrastructure.config import ExperimentConfig, dump_config
from src.infrastructure.persistence.checkpoint_io import (
    classifier_to_dict,
    gcn_to_dict,
    heads_to_dict,
    mlp_to_dict,
    save_checkpoint,
    transition_to_dict,
)
from src.infrastructure.persistence.dataset_io import load_crowd, save_crowd
from src.infrastructure.persistence.graph_io import save_graph
from src.infrastructure.persistence.report_io import (
    DISTILLED_FILE,
    METRICS_FILE,
    TIMINGS_FILE,
    write_distilled,
    write_json,
    write_manifest,
)

logger = structlog.get_logger(__name__)

CONFIG_FILE = "config.yaml"

STAGE_PLANS: dict[Method, tuple[str, ...]] = {
    Method.TAIDTM: (
        "data", "warmup", "distill", "train_global", "finetune",
        "build_graph", "train_gcn", "train_classifier", "evaluate",
    ),
    Method.TAIDTM_FT: (
        "data", "warmup", "distill", "train_global", "finetune", "train_classifier", "evaluate",
    ),
    Method.GLOBAL_ONLY: ("data", "warmup", "distill", "train_global", "train_classifier", "evaluate"),
    Method.MV: ("data", "aggregate", "train_classifier", "evaluate"),
    Method.DS: ("data", "aggregate", "train_classifier", "evaluate"),
}


def stage_plan(method: Method) -> tuple[str, ...]:
    """Stages a method runs, in execution order."""
    return STAGE_PLANS[method]


def build_crowd(config: ExperimentConfig) -> CrowdDataset:
    """Synthetic crowd described by the data and noise sections."""
    return generate_crowd(
        n=config.data.n,
        dim=config.data.d,
        num_classes=config.data.num_classes,
        class_sep=config.data.class_sep,
        num_annotators=config.noise.num_annotators,
        num_groups=config.noise.num_groups,
        rho=config.noise.rho,
        rho_max=config.noise.rho_max,
        mean_annotations=config.noise.mean_annotations,
        seed=config.seed,
        scope=config.noise.flip_rate_scope,
    )


@dataclass
class _RunState:
    """Intermediate products of one run."""

    directory: Path
    external: bool = False
    written: list[Path] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    losses: dict[str, Optional[float]] = field(default_factory=dict)
    crowd: Optional[CrowdDataset] = None
    distilled: Optional[DistilledSet] = None
    global_net: Optional[TransitionNetwork] = None
    source: Optional[TransitionSource] = None
    graph: Optional[SimilarityGraph] = None
    ds: Optional[DsResult] = None
    classifier: Optional[ClassifierNetwork] = None

    @property
    def checkpoints(self) -> Path:
        return self.directory / "checkpoints"


class PipelineService:
    """Runs the staged pipeline and writes every artifact under out/{config_hash}/."""

    @contextmanager
    def _stage(self, name: str, state: _RunState) -> Iterator[None]:
        logger.info("Stage started", stage=name)
        start = time.perf_counter()
        try:
            yield
        except PipelineError:
            raise
        except Exception as error:
            logger.error("Stage failed", stage=name, error=str(error))
            raise PipelineError(name, error) from error
        state.timings[name] = time.perf_counter() - start
        logger.info("Stage finished", stage=name, seconds=round(state.timings[name], 3))

    def generate(self, command: GenerateCommand) -> Path:
        """Write the synthetic crowd and its config."""
        directory = command.out_dir / command.config.config_hash
        crowd = build_crowd(command.config)
        save_crowd(directory, crowd)
        dump_config(command.config, directory / CONFIG_FILE)
        logger.info("Generated crowd", directory=str(directory), mean_annotations=crowd.mean_annotations())
        return directory

    def run_pipeline(self, command: RunCommand) -> RunResult:
        """Execute the method's stages in order; dry runs only report the plan."""
        config = command.config
        stages = stage_plan(config.method)
        directory = command.out_dir / config.config_hash
        if command.dry_run:
            logger.info("Dry run", method=config.method.value, stages=list(stages), directory=str(directory))
            return RunResult(metrics=None, directory=directory, stages=stages)

        directory.mkdir(parents=True, exist_ok=True)
        state = _RunState(directory=directory, external=command.data_dir is not None)
        dump_config(config, directory / CONFIG_FILE)
        state.written.append(directory / CONFIG_FILE)
        logger.info(
            "Pipeline started",
            method=config.method.value,
            seed=config.seed,
            config_hash=config.config_hash,
        )

        with self._stage("data", state):
            state.crowd = (
                load_crowd(command.data_dir, config.data.num_classes, config.noise.num_annotators)
                if command.data_dir is not None
                else build_crowd(config)
            )
            state.written.extend(save_crowd(directory, state.crowd))

        if config.method.uses_transitions:
            self._transition_stages(config, state)
        else:
            self._aggregation_stages(config, state)

        with self._stage("evaluate", state):
            metrics = self._evaluate(config, state)

        state.written.append(write_json(directory / METRICS_FILE, metrics.to_dict()))
        state.written.append(
            write_json(directory / TIMINGS_FILE, {"config_hash": config.config_hash, "wall_time": state.timings})
        )
        write_manifest(directory, config.config_hash, state.written)
        logger.info(
            "Pipeline finished",
            test_accuracy=metrics.test_accuracy,
            transition_error=metrics.transition_error,
            directory=str(directory),
        )
        return RunResult(metrics=metrics, directory=directory, stages=stages, timings=dict(state.timings))

    def _checkpoint(self, state: _RunState, name: str, kind: str, payload: dict, config_hash: str) -> None:
        state.written.append(save_checkpoint(state.checkpoints / f"{name}.json", kind, payload, config_hash))

    def _transition_stages(self, config: ExperimentConfig, state: _RunState) -> None:
        assert state.crowd is not None
        crowd, seed, digest = state.crowd, config.seed, config.config_hash
        spec = config.optimizer.spec()

        with self._stage("warmup", state):
            warmup, history = train_warmup(
                crowd, config.distill.warmup_epochs, spec, seed, config.distill.hidden
            )
            state.losses["warmup"] = finite_or_none(history.final_loss)
            self._checkpoint(state, "warmup", "mlp", mlp_to_dict(warmup), digest)

        with self._stage("distill", state):
            distilled = collect_distilled(
                warmup, crowd, config.distill.tau, config.distill.balance, seed
            )
            state.distilled = distilled
            state.written.append(write_distilled(state.directory / DISTILLED_FILE, distilled))

        with self._stage("train_global", state):
            global_net, history = train_global(
                distilled, config.transition.global_epochs, spec, seed,
                config.transition.hidden, config.transition.latent_dim,
            )
            state.global_net = global_net
            state.source = global_net.head()
            state.losses["global"] = finite_or_none(history.final_loss)
            self._checkpoint(state, "global", "transition", transition_to_dict(global_net), digest)

        head_source = METHOD_HEAD_SOURCE[config.method]
        if head_source is not HeadSource.GLOBAL:
            with self._stage("finetune", state):
                heads = finetune_all(
                    global_net, distilled, config.transition.finetune_epochs, spec, seed,
                    config.distill.min_examples,
                )
                state.source = heads
                self._checkpoint(state, "individual", "heads", heads_to_dict(heads), digest)

        if head_source is HeadSource.INTERDEPENDENT:
            with self._stage("build_graph", state):
                state.graph = build_graph(
                    heads.head_vectors(), config.graph.k,
                    config.svd_rank_for(state.external), config.graph.norm,
                )
                state.written.extend(save_graph(state.directory / "graphs", state.graph))
            with self._stage("train_gcn", state):
                num_classes = crowd.num_classes
                mapper = GcnMapper.initialize(
                    crowd.num_annotators,
                    config.graph.hidden,
                    global_net.latent_dim * num_classes * num_classes,
                    seed,
                    config.graph.final_activation,
                )
                mapper, history = train_gcn(
                    mapper, state.graph, distilled, global_net, config.graph.epochs,
                    config.optimizer.spec(learning_rate=config.graph.learning_rate), seed,
                )
                state.losses["gcn"] = finite_or_none(history.final_loss)
                state.source = GcnTransition(
                    mapper, state.graph.A_hat, global_net.latent_dim, num_classes
                )
                self._checkpoint(state, "gcn", "gcn", gcn_to_dict(mapper), digest)

        with self._stage("train_classifier", state):
            assert state.source is not None
            fit = train_classifier(
                crowd, state.source, global_net, config.classifier.epochs,
                config.optimizer.spec(milestones=config.classifier.milestones), seed,
                config.classifier.hidden, config.classifier.joint_revision,
            )
            state.classifier = fit.classifier
            state.source = fit.source
            state.losses["classifier"] = finite_or_none(fit.history.final_loss)
            self._checkpoint(state, "classifier", "classifier", classifier_to_dict(fit.classifier), digest)
            if config.classifier.joint_revision:
                self._save_revised(state, fit.source, digest)

    def _save_revised(self, state: _RunState, source: TransitionSource, digest: str) -> None:
        if isinstance(source, GcnTransition):
            self._checkpoint(state, "gcn_revised", "gcn", gcn_to_dict(source.mapper), digest)
        elif isinstance(source, IndividualHeads):
            self._checkpoint(state, "individual_revised", "heads", heads_to_dict(source), digest)
        elif isinstance(source, GlobalHead) and state.global_net is not None:
            revised = state.global_net.with_parameters(
                [*state.global_net.backbone.parameters(), source.weight, source.bias]
            )
            self._checkpoint(state, "global_revised", "transition", transition_to_dict(revised), digest)

    def _aggregation_stages(self, config: ExperimentConfig, state: _RunState) -> None:
        assert state.crowd is not None
        crowd = state.crowd
        with self._stage("aggregate", state):
            table = AnnotationTable.from_crowd(crowd)
            if config.method is Method.DS:
                state.ds = dawid_skene_em(table)
                aggregated = state.ds.labels
            else:
                aggregated = aggregate_majority(table)
        with self._stage("train_classifier", state):
            classifier, history = train_plain(
                crowd.base.features[aggregated.instance_ids],
                aggregated.labels,
                crowd.num_classes,
                config.classifier.epochs,
                config.optimizer.spec(milestones=config.classifier.milestones),
                config.seed,
                config.classifier.hidden,
            )
            state.classifier = classifier
            state.losses["classifier"] = finite_or_none(history.final_loss)
            self._checkpoint(
                state, "classifier", "classifier", classifier_to_dict(classifier), config.config_hash
            )

    def _transition_error(self, config: ExperimentConfig, state: _RunState) -> Optional[float]:
        crowd = state.crowd
        assert crowd is not None
        if crowd.pool is None:
            return None
        instances, annotators = evaluation_pairs(
            crowd.base, crowd.num_annotators, config.classifier.eval_pairs, config.seed
        )
        features = crowd.base.features[instances]
        if state.source is not None and state.global_net is not None:
            return source_transition_error(
                state.source, state.global_net, crowd.pool, features, annotators
            )
        if state.ds is not None:
            return transition_error(
                state.ds.model.confusions[annotators],
                crowd.pool.transition_matrices(features, annotators),
            )
        return None

    def _evaluate(self, config: ExperimentConfig, state: _RunState) -> MetricsReport:
        crowd, classifier = state.crowd, state.classifier
        assert crowd is not None and classifier is not None
        distilled = state.distilled
        m_j = purity = recovery = None
        if distilled is not None:
            counts = distilled.annotator_counts()
            m_j = AnnotatorSummary(
                min=int(counts.min()),
                mean=float(counts.mean()),
                max=int(counts.max()),
                insufficient=len(distilled.insufficient_annotators(config.distill.min_examples)),
            )
            ids = np.array([e.instance_id for e in distilled.examples], dtype=np.int64)
            known = crowd.base.known()[ids]
            if np.any(known):
                truth = crowd.base.true_labels[ids[known]]
                purity = float(np.mean(distilled.y_stars()[known] == truth))
        if state.graph is not None and crowd.pool is not None:
            recovery = graph_recovery(state.graph.A_star, crowd.pool.group_of)
        return MetricsReport(
            method=config.method.value,
            seed=config.seed,
            config_hash=config.config_hash,
            test_accuracy=evaluate(classifier, crowd.base),
            transition_error=finite_or_none(self._transition_error(config, state)),
            noisy_agreement=noisy_agreement(classifier, crowd),
            mean_annotations=config.noise.mean_annotations,
            num_groups=config.noise.num_groups,
            k=config.graph.k,
            rho=config.noise.rho,
            m=None if distilled is None else distilled.m,
            m_j=m_j,
            distilled_purity=purity,
            graph_recovery=recovery,
            final_losses=state.losses,
        )
