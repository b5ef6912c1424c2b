"""JSON checkpoints of trained networks; floats survive the round trip exactly."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Optional, TypeVar

import numpy as np

from src.domain.crowdtrain import ClassifierNetwork
from src.domain.exceptions import DataError, DomainException
from src.domain.graphtransfer import GcnMapper
from src.domain.tensornet import DenseLayer, MlpNetwork
from src.domain.transition import IndividualHeads, TransitionNetwork
from src.domain.value_objects import Activation

T = TypeVar("T")


def _array(values: Any) -> np.ndarray:
    return np.array(values, dtype=np.float64)


def mlp_to_dict(net: MlpNetwork) -> dict[str, Any]:
    return {
        "layers": [
            {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation.value,
            }
            for layer in net.layers
        ]
    }


def mlp_from_dict(payload: dict[str, Any]) -> MlpNetwork:
    return MlpNetwork(
        layers=tuple(
            DenseLayer(
                weight=_array(layer["weight"]),
                bias=_array(layer["bias"]),
                activation=Activation(layer["activation"]),
            )
            for layer in payload["layers"]
        )
    )


def transition_to_dict(net: TransitionNetwork) -> dict[str, Any]:
    return {
        "backbone": mlp_to_dict(net.backbone),
        "head_weight": net.head_weight.tolist(),
        "head_bias": net.head_bias.tolist(),
        "num_classes": net.num_classes,
    }


def transition_from_dict(payload: dict[str, Any]) -> TransitionNetwork:
    return TransitionNetwork(
        backbone=mlp_from_dict(payload["backbone"]),
        head_weight=_array(payload["head_weight"]),
        head_bias=_array(payload["head_bias"]),
        num_classes=int(payload["num_classes"]),
    )


def heads_to_dict(heads: IndividualHeads) -> dict[str, Any]:
    return {
        "weights": heads.weights.tolist(),
        "biases": heads.biases.tolist(),
        "fallback": heads.fallback.tolist(),
        "num_classes": heads.num_classes,
    }


def heads_from_dict(payload: dict[str, Any]) -> IndividualHeads:
    return IndividualHeads(
        weights=_array(payload["weights"]),
        biases=_array(payload["biases"]),
        fallback=np.array(payload["fallback"], dtype=bool),
        num_classes=int(payload["num_classes"]),
    )


def gcn_to_dict(mapper: GcnMapper) -> dict[str, Any]:
    return {
        "weights": [weight.tolist() for weight in mapper.weights],
        "final_activation": mapper.final_activation.value,
    }


def gcn_from_dict(payload: dict[str, Any]) -> GcnMapper:
    return GcnMapper(
        weights=tuple(_array(weight) for weight in payload["weights"]),
        final_activation=Activation(payload["final_activation"]),
    )


def classifier_to_dict(classifier: ClassifierNetwork) -> dict[str, Any]:
    return {"net": mlp_to_dict(classifier.net)}


def classifier_from_dict(payload: dict[str, Any]) -> ClassifierNetwork:
    return ClassifierNetwork(mlp_from_dict(payload["net"]))


def save_checkpoint(path: Path, kind: str, payload: dict[str, Any], config_hash: str) -> Path:
    """Write {kind, config_hash, payload} as sorted-key JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"kind": kind, "config_hash": config_hash, "payload": payload}
    path.write_text(json.dumps(document, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_checkpoint(
    path: Path,
    kind: str,
    decode: Callable[[dict[str, Any]], T],
    expected_hash: Optional[str] = None,
) -> T:
    """Read and decode a checkpoint, checking its kind and optionally its config hash."""
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as error:
        raise DataError(f"cannot read checkpoint {path.name}: {error}") from error
    except json.JSONDecodeError as error:
        raise DataError(f"{path.name}: {error.msg}", line=error.lineno) from error
    if document.get("kind") != kind:
        raise DataError(f"{path.name} holds {document.get('kind')!r}, expected {kind!r}", field="kind")
    if expected_hash is not None and document.get("config_hash") != expected_hash:
        raise DataError(
            f"{path.name} was written for config {document.get('config_hash')}, not {expected_hash}",
            field="config_hash",
        )
    try:
        return decode(document["payload"])
    except (KeyError, TypeError, ValueError) as error:
        raise DataError(f"malformed checkpoint {path.name}: {error}") from error
    except DomainException as error:
        raise DataError(f"inconsistent checkpoint {path.name}: {error}") from error
