"""JSON model files and DOT rendering.

Floats are written with ``repr`` (the json default), so a write/read cycle
reproduces every parameter bit for bit.  Keys are sorted and arcs listed in
sorted order so equal models give byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError, DataError
from .graph import Dag, Node
from .params import GaussianBn, LocalDistribution

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ModelFile:
    dag: Dag
    locals: Mapping[str, LocalDistribution] | None = None
    fit_method: str | None = None
    lambda_policy: str | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict)
    strengths: Mapping[tuple[str, str], float] | None = None

    @classmethod
    def from_bn(cls, bn: GaussianBn, metadata: Mapping[str, Any] | None = None,
                strengths: Mapping[tuple[str, str], float] | None = None) -> "ModelFile":
        return cls(bn.dag, dict(bn.locals), bn.fit_method, bn.lambda_policy,
                   dict(metadata or {}), strengths)

    @property
    def has_parameters(self) -> bool:
        return self.locals is not None

    @property
    def bn(self) -> GaussianBn:
        if self.locals is None:
            raise ConfigError("model file holds a structure only; fit parameters first")
        return GaussianBn(self.dag, self.locals, self.fit_method or "ols", self.lambda_policy)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "nodes": [{"id": n.id, "kind": n.kind, "tier": n.tier} for n in self.dag.nodes],
            "arcs": [list(a) for a in sorted(self.dag.arcs)],
            "metadata": dict(self.metadata),
        }
        if self.locals is not None:
            out["fit"] = {"method": self.fit_method, "lambda_policy": self.lambda_policy}
            out["locals"] = {
                k: {
                    "intercept": ld.intercept,
                    "coefficients": dict(ld.coefficients),
                    "residual_variance": ld.residual_variance,
                    "penalty": ld.penalty,
                }
                for k, ld in self.locals.items()
            }
        if self.strengths is not None:
            out["strengths"] = [[a, b, f] for (a, b), f in sorted(self.strengths.items())]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelFile":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported model schema version {version!r} (expected {SCHEMA_VERSION})")
        try:
            nodes = tuple(Node(n["id"], n["kind"], int(n["tier"])) for n in d["nodes"])
            dag = Dag(nodes, frozenset(tuple(a) for a in d["arcs"]))
            locs = None
            fit = d.get("fit") or {}
            if "locals" in d:
                locs = {
                    k: LocalDistribution(k, float(v["intercept"]),
                                         {p: float(b) for p, b in v["coefficients"].items()},
                                         float(v["residual_variance"]), v.get("penalty"))
                    for k, v in d["locals"].items()
                }
            strengths = None
            if "strengths" in d:
                strengths = {(a, b): float(f) for a, b, f in d["strengths"]}
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed model file: {e}") from None
        return cls(dag, locs, fit.get("method"), fit.get("lambda_policy"),
                   dict(d.get("metadata", {})), strengths)

    @classmethod
    def from_json(cls, text: str) -> "ModelFile":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise DataError(f"model file is not valid JSON: {e}") from None

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ModelFile":
        p = Path(path)
        if not p.exists():
            raise DataError(f"model file not found: {p}")
        mf = cls.from_json(p.read_text())
        if mf.has_parameters:
            mf.bn  # validates locals against the dag
        return mf


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(dag: Dag, strengths: Mapping[tuple[str, str], float] | None = None,
           precision: int = 6, name: str = "bn") -> str:
    """DOT text: traits green ellipses, SNPs light blue boxes.

    With ``strengths`` each arc's width grows with its strength and carries
    it as a label.
    """
    lines = [f"digraph {_quote(name)} {{", "  node [style=filled];"]
    for n in sorted(dag.nodes, key=lambda v: (v.is_snp is False, v.id)):
        if n.is_snp:
            lines.append(f"  {_quote(n.id)} [shape=box, fillcolor=lightblue];")
        else:
            lines.append(f"  {_quote(n.id)} [shape=ellipse, fillcolor=green, tier={n.tier}];")
    for a, b in sorted(dag.arcs):
        attrs = ""
        if strengths is not None:
            f = strengths.get((a, b), 0.0)
            attrs = f' [penwidth={1 + 4 * f:.{precision}g}, label="{f:.{precision}g}"]'
        lines.append(f"  {_quote(a)} -> {_quote(b)}{attrs};")
    lines.append("}")
    return "\n".join(lines) + "\n"
