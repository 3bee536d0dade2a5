"""Plain-text file formats: datasets, fitted models and experiment configs.

Datasets are CSV with a ``# d=<d> n=<n>`` header line and one observation
per row. Models are JSON with a fixed key order so identical fits give
identical bytes. Floats are written with 17 significant digits, enough to
round-trip any double.
"""

from __future__ import annotations

import dataclasses
import json
import re
from pathlib import Path

import numpy as np

from .em import EmConfig
from .model import PenaltyConfig, VmfMixture
from .simulation import ExperimentSpec

__all__ = [
    "DataFormatError",
    "write_dataset",
    "read_dataset",
    "write_labels",
    "model_to_dict",
    "model_from_dict",
    "write_model",
    "read_model",
    "parse_penalty",
    "load_experiment_specs",
]

_HEADER = re.compile(r"^#\s*d\s*=\s*(\d+)\s+n\s*=\s*(\d+)\s*$")


class DataFormatError(ValueError):
    """Malformed dataset, model or config file."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset(path, data) -> None:
    x = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = x.shape
    lines = [f"# d={d} n={n}"]
    lines += [",".join(_fmt(v) for v in row) for row in x]
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path, renormalize: bool = False, atol: float = 1e-8) -> np.ndarray:
    """Parse a dataset file.

    Rows whose norm is more than ``atol`` away from one are rejected unless
    ``renormalize`` is set, in which case they are projected onto the
    sphere. Error messages name the 1-based data row.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read dataset {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise DataFormatError(f"{path}: first line must be '# d=<d> n=<n>', got {lines[0]!r}")
    d, n = int(m.group(1)), int(m.group(2))
    if d < 2:
        raise DataFormatError(f"{path}: dimension must be at least 2")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise DataFormatError(f"{path}: header says n={n} but found {len(body)} rows")
    x = np.empty((n, d))
    for i, ln in enumerate(body):
        parts = ln.split(",")
        if len(parts) != d:
            raise DataFormatError(f"{path}: row {i + 1} has {len(parts)} values, expected {d}")
        try:
            x[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise DataFormatError(f"{path}: row {i + 1} is not numeric ({exc})") from exc
        norm = np.linalg.norm(x[i])
        if not np.isfinite(norm) or norm == 0.0:
            raise DataFormatError(f"{path}: row {i + 1} is zero or non-finite")
        if abs(norm - 1.0) > atol:
            if not renormalize:
                raise DataFormatError(f"{path}: row {i + 1} has norm {norm!r}; pass --renormalize to project it")
            x[i] /= norm
    return x


def write_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def model_to_dict(mix: VmfMixture, metadata: dict | None = None) -> dict:
    out = {
        "d": mix.dim,
        "p": mix.p,
        "weights": [float(w) for w in mix.weights],
        "components": [{"mu": [float(v) for v in c.mu], "kappa": float(c.kappa)} for c in mix.components],
    }
    if metadata:
        out["metadata"] = metadata
    return out


def model_from_dict(doc: dict) -> VmfMixture:
    try:
        d, p = int(doc["d"]), int(doc["p"])
        weights = doc["weights"]
        comps = doc["components"]
        means = [c["mu"] for c in comps]
        kappas = [c["kappa"] for c in comps]
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"model document is missing field {exc}") from exc
    if len(weights) != p or len(comps) != p:
        raise DataFormatError(f"model declares p={p} but lists {len(weights)} weights and {len(comps)} components")
    if any(len(mu) != d for mu in means):
        raise DataFormatError(f"model declares d={d} but a mean direction has another length")
    try:
        return VmfMixture(weights, means, kappas)
    except ValueError as exc:
        raise DataFormatError(f"invalid model: {exc}") from exc


def write_model(path, mix: VmfMixture, metadata: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(mix, metadata), indent=2) + "\n")


def read_model(path) -> VmfMixture:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read model {path}: {exc}") from exc
    return model_from_dict(doc)


def parse_penalty(text: str | None) -> PenaltyConfig:
    """``"zeta=1.0"``, ``"fixed=0.01"``, ``"circvar"`` or ``"none"``."""
    if text is None or text == "none":
        return PenaltyConfig.fixed(0.0)
    if text in ("circvar", "circular_variance"):
        return PenaltyConfig.circular_variance()
    key, _, val = text.partition("=")
    try:
        value = float(val)
    except ValueError:
        raise ValueError(f"bad penalty {text!r}; use zeta=<z>, fixed=<psi>, circvar or none") from None
    if key == "zeta":
        return PenaltyConfig.from_zeta(value)
    if key in ("fixed", "psi"):
        return PenaltyConfig.fixed(value)
    raise ValueError(f"bad penalty {text!r}; use zeta=<z>, fixed=<psi>, circvar or none")


_SPEC_FIELDS = {
    "name", "d", "n", "replications", "true_weights", "true_kappas",
    "mean_direction_rule", "fixed_means", "em", "seed",
}
_EM_FIELDS = {f.name for f in dataclasses.fields(EmConfig)} - {"p", "seed"}


def _em_from(doc: dict, where: str) -> EmConfig:
    unknown = sorted(set(doc) - _EM_FIELDS)
    if unknown:
        raise DataFormatError(f"{where}: unknown em field {unknown[0]!r}")
    kwargs = dict(doc)
    if "penalty" in kwargs:
        kwargs["penalty"] = parse_penalty(kwargs["penalty"])
    try:
        return EmConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{where}: invalid em settings: {exc}") from exc


def load_experiment_specs(path) -> tuple[str, list[ExperimentSpec]]:
    """Read a JSON experiment config.

    ``n`` may be a single size or a list; each size becomes one
    :class:`ExperimentSpec` cell. Unknown keys are rejected by name.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read spec {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: top level must be an object")
    unknown = sorted(set(doc) - _SPEC_FIELDS)
    if unknown:
        raise DataFormatError(f"{path}: unknown field {unknown[0]!r}")
    for key in ("d", "n", "replications", "true_weights", "true_kappas"):
        if key not in doc:
            raise DataFormatError(f"{path}: missing field {key!r}")
    sizes = doc["n"] if isinstance(doc["n"], list) else [doc["n"]]
    em = _em_from(doc.get("em", {}), str(path))
    specs = []
    for n in sizes:
        try:
            specs.append(
                ExperimentSpec(
                    d=int(doc["d"]),
                    n=int(n),
                    replications=int(doc["replications"]),
                    true_weights=tuple(doc["true_weights"]),
                    true_kappas=tuple(doc["true_kappas"]),
                    mean_direction_rule=doc.get("mean_direction_rule", "uniform_random_per_replicate"),
                    fixed_means=doc.get("fixed_means"),
                    em=em,
                    seed=int(doc.get("seed", 0)),
                )
            )
        except (TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: {exc}") from exc
    return doc.get("name", Path(path).stem), specs
