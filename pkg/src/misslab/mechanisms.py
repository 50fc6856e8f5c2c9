"""Declarative missingness mechanisms and their forward simulation.

A :class:`MechanismSpec` assigns one :class:`MechanismRule` per column. A
rule is a bundle of clauses over predictors (data columns, other columns'
missingness indicators, shared latent block indicators, a per-subject random
effect, constants):

* ``LogisticClause`` — probability through a logistic link;
* ``TableClause`` — probabilities keyed by binary parent configurations
  (an empty parent set is a plain Bernoulli rate);
* ``ForceClause`` — a predicate that forces the indicator to 0 or 1;
* ``LogicalClause`` — a data predicate that forces the cell missing *and*
  flags it non-imputable (no underlying value exists).

Masks are sampled column by column along ``simulation_order``, so the joint
law factorises into a product of univariate conditionals; indicator
references must point at columns simulated earlier. Block-shaped coupling
(mutual, order-free association between indicators) is realised through a
per-row latent Bernoulli block indicator that all member rules reference,
which reproduces joint block patterns while keeping sampling sequential.

:func:`classify` places a spec in the mechanism taxonomy: data dependence
(MCAR / MAR / MNAR), indicator structure (unstructured / weak / strong),
shape (block / sequential), determinism with respect to the data, and the
sign of indicator-indicator association where determinable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .tabular import DataMatrix, MissMask

MCAR, MAR, MNAR = "MCAR", "MAR", "MNAR"
UNSTRUCTURED, WEAK, STRONG = "unstructured", "weak", "strong"
SHAPE_NONE, BLOCK, SEQUENTIAL = "none", "block", "sequential"
PROBABILISTIC, DETERMINISTIC = "probabilistic", "deterministic"
POSITIVE, NEGATIVE, MIXED = "positive", "negative", "mixed"

_OPS = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}


class SpecificationError(ValueError):
    """The mechanism specification itself is invalid."""


class EvaluationError(RuntimeError):
    """Rule evaluation failed on concrete data (e.g. non-finite predictor)."""


# ---------------------------------------------------------------------------
# Predictors and predicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictorRef:
    """Reference to a quantity a rule may condition on.

    kind: "data" (column of X), "mask" (another column's indicator),
    "block" (latent block indicator), "subject" (row random effect) or
    "constant". ``scale``/``shift`` apply an affine transform to the raw
    value before use.
    """

    kind: str
    index: int | None = None
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("data", "mask", "block", "subject", "constant"):
            raise SpecificationError(f"unknown predictor kind {self.kind!r}")
        if self.kind in ("data", "mask", "block") and self.index is None:
            raise SpecificationError(f"{self.kind} predictor needs an index")


def data_col(j: int, scale: float = 1.0, shift: float = 0.0) -> PredictorRef:
    return PredictorRef("data", j, scale, shift)


def mask_col(j: int) -> PredictorRef:
    return PredictorRef("mask", j)


def block_ref(b: int = 0) -> PredictorRef:
    return PredictorRef("block", b)


def subject_effect() -> PredictorRef:
    return PredictorRef("subject")


@dataclass(frozen=True)
class Comparison:
    """Atomic predicate ``ref <op> value`` (after the ref's affine transform)."""

    ref: PredictorRef
    op: str
    value: float

    def __post_init__(self):
        if self.op not in _OPS:
            raise SpecificationError(f"unknown comparison operator {self.op!r}")


Predicate = tuple[Comparison, ...]  # conjunction of comparisons


# ---------------------------------------------------------------------------
# Clauses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogisticClause:
    intercept: float = 0.0
    terms: tuple[tuple[PredictorRef, float], ...] = ()

    def __post_init__(self):
        if not np.isfinite(self.intercept):
            raise SpecificationError("logistic intercept must be finite")
        for _, coef in self.terms:
            if not np.isfinite(coef):
                raise SpecificationError("logistic coefficients must be finite")


@dataclass(frozen=True)
class TableClause:
    """Conditional probabilities keyed by binary parent values.

    ``probs`` maps each full parent configuration (a tuple of 0/1 values,
    one per parent) to a missingness probability. Every configuration must
    be present. Parents must be mask or block references.
    """

    parents: tuple[PredictorRef, ...] = ()
    probs: tuple[tuple[tuple[int, ...], float], ...] = ((tuple(), 0.0),)

    def __post_init__(self):
        for ref in self.parents:
            if ref.kind not in ("mask", "block"):
                raise SpecificationError("table parents must be mask or block refs")
        keys = {k for k, _ in self.probs}
        if self.parents:
            want = {
                tuple(int(b) for b in np.binary_repr(i, len(self.parents)))
                for i in range(2 ** len(self.parents))
            }
        else:
            want = {tuple()}
        if keys != want:
            raise SpecificationError(
                "table must assign a probability to every parent configuration"
            )
        for _, p in self.probs:
            if not (0.0 <= p <= 1.0):
                raise SpecificationError(f"table probability {p} outside [0, 1]")

    @classmethod
    def from_dict(
        cls, parents: Sequence[PredictorRef], probs: Mapping[tuple[int, ...], float]
    ) -> "TableClause":
        items = tuple(sorted((tuple(k), float(v)) for k, v in probs.items()))
        return cls(tuple(parents), items)

    @classmethod
    def bernoulli(cls, rate: float) -> "TableClause":
        return cls((), (((), float(rate)),))

    def prob_map(self) -> dict[tuple[int, ...], float]:
        return dict(self.probs)


@dataclass(frozen=True)
class ForceClause:
    """When every comparison holds, the indicator is forced to ``value``."""

    when: Predicate
    value: int = 1

    def __post_init__(self):
        if self.value not in (0, 1):
            raise SpecificationError("forced value must be 0 or 1")
        if not self.when:
            raise SpecificationError("force clause needs a non-empty predicate")


@dataclass(frozen=True)
class LogicalClause:
    """Data predicate marking cells logically missing (non-imputable)."""

    when: Predicate

    def __post_init__(self):
        if not self.when:
            raise SpecificationError("logical clause needs a non-empty predicate")
        for cmp_ in self.when:
            if cmp_.ref.kind != "data":
                raise SpecificationError(
                    "logical clauses may only reference data columns"
                )


Clause = Union[LogisticClause, TableClause, ForceClause, LogicalClause]


@dataclass(frozen=True)
class MechanismRule:
    target: int
    clauses: tuple[Clause, ...] = ()
    subject_scope: Predicate | None = None

    def refs(self) -> list[PredictorRef]:
        out: list[PredictorRef] = []
        for c in self.clauses:
            if isinstance(c, LogisticClause):
                out.extend(ref for ref, _ in c.terms)
            elif isinstance(c, TableClause):
                out.extend(c.parents)
            elif isinstance(c, (ForceClause, LogicalClause)):
                out.extend(cmp_.ref for cmp_ in c.when)
        if self.subject_scope:
            out.extend(cmp_.ref for cmp_ in self.subject_scope)
        return out


@dataclass(frozen=True)
class LatentBlock:
    """Per-row latent Bernoulli indicator shared by block-member rules."""

    prob: float

    def __post_init__(self):
        if not (0.0 <= self.prob <= 1.0):
            raise SpecificationError("block probability must lie in [0, 1]")


@dataclass(frozen=True)
class TaxonomyLabel:
    """Position of a mechanism in the taxonomy.

    ``determinism`` describes the data-to-indicator relationship only;
    indicator-to-indicator determinism is what makes ``structure`` strong.
    """

    data_dependence: str
    structure: str
    shape: str
    determinism: str
    sign: str | None = None

    def __post_init__(self):
        if self.data_dependence not in (MCAR, MAR, MNAR):
            raise SpecificationError(f"bad data_dependence {self.data_dependence!r}")
        if self.structure not in (UNSTRUCTURED, WEAK, STRONG):
            raise SpecificationError(f"bad structure {self.structure!r}")
        if self.shape not in (SHAPE_NONE, BLOCK, SEQUENTIAL):
            raise SpecificationError(f"bad shape {self.shape!r}")
        if self.determinism not in (PROBABILISTIC, DETERMINISTIC):
            raise SpecificationError(f"bad determinism {self.determinism!r}")
        if self.structure == UNSTRUCTURED and self.shape != SHAPE_NONE:
            raise SpecificationError("unstructured mechanisms have no shape")

    @property
    def has_strong_component(self) -> bool:
        """True if any relationship (data or indicator) is deterministic."""
        return self.structure == STRONG or (
            self.structure != UNSTRUCTURED and self.determinism == DETERMINISTIC
        )

    def short(self) -> str:
        """Compact cell name, e.g. MCAR-U, MAR-UP, MNAR-SS.

        Mixtures of weak indicator structure with a deterministic data
        relationship render as e.g. ``MAR-WS/SS``.
        """
        if self.structure == UNSTRUCTURED:
            if self.data_dependence == MCAR:
                suffix = "U"
            else:
                suffix = "UD" if self.determinism == DETERMINISTIC else "UP"
        elif self.structure == STRONG:
            suffix = "SS"
        else:
            suffix = "WS/SS" if self.determinism == DETERMINISTIC else "WS"
        return f"{self.data_dependence}-{suffix}"


@dataclass(frozen=True)
class MechanismSpec:
    """One rule per column plus the sampling order and shared latents.

    ``latent_columns`` are data columns the analyst never observes (so any
    rule referencing them is data-dependent in the not-at-random sense).
    ``temporal_order`` declares the order against which sequential structure
    is judged; it defaults to storage order and is independent of
    ``simulation_order``, which only needs to topologically sort the
    indicator references.
    """

    rules: tuple[MechanismRule, ...]
    simulation_order: tuple[int, ...] | None = None
    subject_effect_var: float | None = None
    blocks: tuple[LatentBlock, ...] = ()
    latent_columns: frozenset[int] = frozenset()
    temporal_order: tuple[int, ...] | None = None
    declared_label: TaxonomyLabel | None = None
    col_names: tuple[str, ...] | None = None

    def __post_init__(self):
        p = len(self.rules)
        targets = [r.target for r in self.rules]
        if sorted(targets) != list(range(p)):
            raise SpecificationError("need exactly one rule per column, in any order")
        if targets != list(range(p)):
            object.__setattr__(
                self, "rules", tuple(sorted(self.rules, key=lambda r: r.target))
            )
        order = self.simulation_order
        if order is None:
            order = tuple(range(p))
            object.__setattr__(self, "simulation_order", order)
        else:
            order = tuple(int(j) for j in order)
            object.__setattr__(self, "simulation_order", order)
        if sorted(order) != list(range(p)):
            raise SpecificationError("simulation_order must be a permutation")
        if self.temporal_order is not None:
            t = tuple(int(j) for j in self.temporal_order)
            if sorted(t) != list(range(p)):
                raise SpecificationError("temporal_order must be a permutation")
            object.__setattr__(self, "temporal_order", t)
        object.__setattr__(self, "latent_columns", frozenset(self.latent_columns))
        if self.col_names is not None:
            if len(self.col_names) != p:
                raise SpecificationError("need one column name per column")
            object.__setattr__(self, "col_names", tuple(self.col_names))
        self.validate()

    @property
    def p(self) -> int:
        return len(self.rules)

    def effective_temporal_order(self) -> tuple[int, ...]:
        return (
            self.temporal_order
            if self.temporal_order is not None
            else tuple(range(self.p))
        )

    def names(self) -> tuple[str, ...]:
        if self.col_names is not None:
            return self.col_names
        return tuple(f"X{j + 1}" for j in range(self.p))

    def validate(self) -> None:
        """Check reference ranges and acyclicity under the simulation order."""
        position = {j: k for k, j in enumerate(self.simulation_order)}
        for rule in self.rules:
            for ref in rule.refs():
                if ref.kind in ("data", "mask"):
                    if not (0 <= ref.index < self.p):
                        raise SpecificationError(
                            f"rule for column {rule.target}: {ref.kind} index "
                            f"{ref.index} out of range"
                        )
                if ref.kind == "mask":
                    if ref.index == rule.target:
                        raise SpecificationError(
                            f"rule for column {rule.target} references its own "
                            "missingness indicator"
                        )
                    if position[ref.index] >= position[rule.target]:
                        raise SpecificationError(
                            f"rule for column {rule.target} references indicator "
                            f"{ref.index}, which is simulated later"
                        )
                if ref.kind == "block" and not (0 <= ref.index < len(self.blocks)):
                    raise SpecificationError(
                        f"rule for column {rule.target}: block {ref.index} undeclared"
                    )
                if ref.kind == "subject" and self.subject_effect_var is None:
                    raise SpecificationError(
                        f"rule for column {rule.target} references the subject "
                        "effect but none is declared"
                    )
        if self.subject_effect_var is not None and self.subject_effect_var < 0:
            raise SpecificationError("subject effect variance must be >= 0")


# ---------------------------------------------------------------------------
# Forward simulation
# ---------------------------------------------------------------------------


def _expit(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _EvalContext:
    """Resolved predictor values while a mask is being simulated."""

    def __init__(self, values, mask, blocks, subj):
        self.values = values
        self.mask = mask
        self.blocks = blocks
        self.subj = subj
        self.n = values.shape[0]

    def resolve(self, ref: PredictorRef) -> np.ndarray:
        if ref.kind == "data":
            raw = self.values[:, ref.index]
        elif ref.kind == "mask":
            raw = self.mask[:, ref.index].astype(float)
        elif ref.kind == "block":
            raw = self.blocks[ref.index].astype(float)
        elif ref.kind == "subject":
            raw = self.subj
        else:
            raw = np.ones(self.n)
        if ref.scale == 1.0 and ref.shift == 0.0:
            return raw
        return ref.scale * raw + ref.shift

    def predicate(self, pred: Predicate) -> np.ndarray:
        out = np.ones(self.n, dtype=bool)
        for cmp_ in pred:
            out &= _OPS[cmp_.op](self.resolve(cmp_.ref), cmp_.value)
        return out


def rule_probabilities(
    rule: MechanismRule, ctx: _EvalContext
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-row missingness probability and forcing state for one rule.

    Returns ``(prob, force1, force0, logical)``. Probabilistic clauses
    combine as independent triggers; forced-missing beats forced-observed
    beats probability.
    """
    n = ctx.n
    scope = (
        ctx.predicate(rule.subject_scope)
        if rule.subject_scope
        else np.ones(n, dtype=bool)
    )
    prob = np.zeros(n)
    force1 = np.zeros(n, dtype=bool)
    force0 = np.zeros(n, dtype=bool)
    logical = np.zeros(n, dtype=bool)
    for clause in rule.clauses:
        if isinstance(clause, LogisticClause):
            eta = np.full(n, clause.intercept, dtype=float)
            for ref, coef in clause.terms:
                eta += coef * ctx.resolve(ref)
            if not np.isfinite(eta).all():
                raise EvaluationError(
                    f"non-finite linear predictor in rule for column {rule.target}"
                )
            p_c = _expit(eta)
        elif isinstance(clause, TableClause):
            if clause.parents:
                code = np.zeros(n, dtype=np.int64)
                for ref in clause.parents:
                    bit = ctx.resolve(ref)
                    code = (code << 1) | (bit > 0.5).astype(np.int64)
                lut = np.empty(2 ** len(clause.parents))
                for key, p_key in clause.probs:
                    idx = 0
                    for b in key:
                        idx = (idx << 1) | b
                    lut[idx] = p_key
                p_c = lut[code]
            else:
                p_c = np.full(n, clause.probs[0][1])
        elif isinstance(clause, ForceClause):
            hit = ctx.predicate(clause.when) & scope
            if clause.value == 1:
                force1 |= hit
            else:
                force0 |= hit
            continue
        else:  # LogicalClause
            hit = ctx.predicate(clause.when) & scope
            logical |= hit
            continue
        prob = np.where(scope, 1.0 - (1.0 - prob) * (1.0 - p_c), prob)
    return prob, force1, force0, logical


def simulate_mask(
    spec: MechanismSpec,
    x: DataMatrix | np.ndarray,
    seed: int | np.random.SeedSequence | np.random.Generator,
) -> MissMask:
    """Sample a missingness mask for complete data ``x`` under ``spec``.

    Columns are visited in ``simulation_order``; the subject effects and
    latent block indicators are drawn first, once per row. One uniform is
    consumed per cell regardless of forcing, so composing extra
    zero-probability clauses cannot shift the stream. Reproducible given
    the seed.
    """
    if isinstance(x, DataMatrix):
        if not x.is_complete():
            raise ValueError("simulate_mask requires complete data")
        values = x.values
    else:
        values = np.asarray(x, dtype=float)
    n, p = values.shape
    if p != spec.p:
        raise SpecificationError(
            f"spec has {spec.p} columns but data has {p}"
        )
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )
    subj = (
        rng.normal(0.0, np.sqrt(spec.subject_effect_var), size=n)
        if spec.subject_effect_var is not None
        else np.zeros(n)
    )
    blocks = [
        (rng.random(n) < blk.prob).astype(np.uint8) for blk in spec.blocks
    ]
    mask = np.zeros((n, p), dtype=np.uint8)
    logical = np.zeros((n, p), dtype=np.uint8)
    ctx = _EvalContext(values, mask, blocks, subj)
    for j in spec.simulation_order:
        u = rng.random(n)
        prob, force1, force0, logic = rule_probabilities(spec.rules[j], ctx)
        col = (u < prob).astype(np.uint8)
        col[force0] = 0
        col[force1] = 1
        col[logic] = 1
        mask[:, j] = col
        logical[:, j] = logic.astype(np.uint8)
    return MissMask(mask, logical if logical.any() else None)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Dependence:
    """One resolved dependency edge feeding the classifier and DOT export."""

    source: tuple[str, int]  # ("data"|"mask"|"block"|"subject", index)
    target: int
    deterministic: bool
    sign: str | None = None


def _table_parent_effect(clause: TableClause, pos: int):
    """(varies, reaches_one, sign) for the ``pos``-th parent of a table."""
    probs = clause.prob_map()
    varies = False
    reaches_one = False
    signs: set[str] = set()
    for key, p1 in probs.items():
        if key[pos] == 1:
            k0 = key[:pos] + (0,) + key[pos + 1:]
            p0 = probs[k0]
            if p1 != p0:
                varies = True
                signs.add(POSITIVE if p1 > p0 else NEGATIVE)
                if max(p0, p1) == 1.0:
                    reaches_one = True
    if not varies:
        return False, False, None
    sign = signs.pop() if len(signs) == 1 else MIXED
    return True, reaches_one, sign


def _comparison_sign(cmp_: Comparison, forced_value: int) -> str | None:
    # Direction of a force clause w.r.t. a binary mask/block parent:
    # triggering on parent==1 and forcing missing is a positive coupling.
    if cmp_.op == "==" and cmp_.value in (0.0, 1.0):
        trigger_on_one = cmp_.value == 1.0
    elif cmp_.op == "!=" and cmp_.value in (0.0, 1.0):
        trigger_on_one = cmp_.value == 0.0
    elif cmp_.op in (">", ">="):
        trigger_on_one = True
    elif cmp_.op in ("<", "<="):
        trigger_on_one = False
    else:
        return None
    positive = trigger_on_one == (forced_value == 1)
    return POSITIVE if positive else NEGATIVE


def spec_dependencies(spec: MechanismSpec) -> list[_Dependence]:
    """Resolve every effective dependency edge declared by the rules."""
    edges: list[_Dependence] = []
    for rule in spec.rules:
        rule_forces = any(isinstance(c, (ForceClause, LogicalClause))
                          for c in rule.clauses)
        if rule.subject_scope:
            for cmp_ in rule.subject_scope:
                if cmp_.ref.kind in ("data", "mask", "block", "subject"):
                    edges.append(
                        _Dependence(
                            (cmp_.ref.kind, cmp_.ref.index or 0),
                            rule.target,
                            deterministic=rule_forces,
                        )
                    )
        for clause in rule.clauses:
            if isinstance(clause, LogisticClause):
                for ref, coef in clause.terms:
                    if coef * ref.scale == 0.0 or ref.kind == "constant":
                        continue
                    sign = None
                    if ref.kind in ("mask", "block"):
                        sign = POSITIVE if coef * ref.scale > 0 else NEGATIVE
                    edges.append(
                        _Dependence(
                            (ref.kind, ref.index or 0),
                            rule.target,
                            deterministic=False,
                            sign=sign,
                        )
                    )
            elif isinstance(clause, TableClause):
                for pos, ref in enumerate(clause.parents):
                    varies, reaches_one, sign = _table_parent_effect(clause, pos)
                    if not varies:
                        continue
                    edges.append(
                        _Dependence(
                            (ref.kind, ref.index or 0),
                            rule.target,
                            deterministic=reaches_one,
                            sign=sign,
                        )
                    )
            elif isinstance(clause, ForceClause):
                for cmp_ in clause.when:
                    if cmp_.ref.kind == "constant":
                        continue
                    sign = None
                    if cmp_.ref.kind in ("mask", "block"):
                        sign = _comparison_sign(cmp_, clause.value)
                    edges.append(
                        _Dependence(
                            (cmp_.ref.kind, cmp_.ref.index or 0),
                            rule.target,
                            deterministic=True,
                            sign=sign,
                        )
                    )
            else:  # LogicalClause
                for cmp_ in clause.when:
                    edges.append(
                        _Dependence(
                            (cmp_.ref.kind, cmp_.ref.index or 0),
                            rule.target,
                            deterministic=True,
                        )
                    )
    return edges


def classify(spec: MechanismSpec) -> TaxonomyLabel:
    """Place a mechanism in the taxonomy. Classification is total.

    Data dependence: a rule touching its own target's data column or a
    latent column makes the mechanism not-at-random; touching any other
    data column makes it at-random; otherwise completely-at-random. The
    subject effect is deliberately neutral here: it is defined as unrelated
    to anything observed, and mechanisms carrying one keep their family.

    Structure: indicator-indicator coupling, whether direct (mask
    references) or induced by a shared latent block with at least two
    members. Coupling that can force an indicator with certainty is strong;
    merely shifting probabilities is weak. Shape is sequential only when
    every direct coupling points forward in the temporal order and no
    order-free block coupling exists.
    """
    edges = spec_dependencies(spec)

    data_dep = MCAR
    for e in edges:
        kind, idx = e.source
        if kind != "data":
            continue
        if idx == e.target or idx in spec.latent_columns:
            data_dep = MNAR
            break
        data_dep = MAR
    determinism = (
        DETERMINISTIC
        if any(e.deterministic and e.source[0] == "data" for e in edges)
        else PROBABILISTIC
    )

    mask_edges = [e for e in edges if e.source[0] == "mask"]
    block_members: dict[int, list[_Dependence]] = {}
    for e in edges:
        if e.source[0] == "block":
            block_members.setdefault(e.source[1], []).append(e)

    strong = any(e.deterministic for e in mask_edges)
    weak = bool(mask_edges)
    block_coupled = False
    signs: set[str] = {e.sign for e in mask_edges if e.sign is not None}
    for members in block_members.values():
        per_target: dict[int, _Dependence] = {m.target: m for m in members}
        if len(per_target) < 2:
            continue  # a single-member block is just private noise
        block_coupled = True
        weak = True
        det_members = [m for m in per_target.values() if m.deterministic]
        if len(det_members) >= 2:
            strong = True
        # Members that respond to the block in the same direction are
        # positively coupled with each other; opposite responses couple
        # negatively.
        members_list = list(per_target.values())
        for a in range(len(members_list)):
            for b in range(a + 1, len(members_list)):
                sa, sb = members_list[a].sign, members_list[b].sign
                if sa is None or sb is None:
                    continue
                signs.add(POSITIVE if sa == sb else NEGATIVE)

    if strong:
        structure = STRONG
    elif weak:
        structure = WEAK
    else:
        structure = UNSTRUCTURED

    if structure == UNSTRUCTURED:
        shape = SHAPE_NONE
    else:
        pos = {j: k for k, j in enumerate(spec.effective_temporal_order())}
        forward = all(pos[e.source[1]] < pos[e.target] for e in mask_edges)
        shape = SEQUENTIAL if forward and not block_coupled else BLOCK

    if not signs:
        sign = None
    elif signs == {POSITIVE}:
        sign = POSITIVE
    elif signs == {NEGATIVE}:
        sign = NEGATIVE
    else:
        sign = MIXED

    return TaxonomyLabel(data_dep, structure, shape, determinism, sign)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def _toposort(p: int, deps: dict[int, set[int]]) -> tuple[int, ...]:
    # Kahn's algorithm with smallest-index tie break (deterministic).
    remaining = set(range(p))
    order: list[int] = []
    while remaining:
        ready = sorted(j for j in remaining if not (deps[j] & remaining))
        if not ready:
            raise SpecificationError(
                "composed indicator references are cyclic; no simulation order exists"
            )
        order.append(ready[0])
        remaining.discard(ready[0])
    return tuple(order)


def compose(
    specs: Sequence[MechanismSpec], combiner: str = "union_force_missing"
) -> MechanismSpec:
    """Combine mechanisms column-wise.

    Under ``union_force_missing`` a cell is missing if any component forces
    it or any component's probabilistic rule fires (independent draws);
    forced-missing clauses take precedence over probabilistic ones by
    evaluation order.
    """
    if combiner != "union_force_missing":
        raise SpecificationError(f"unknown combiner {combiner!r}")
    if not specs:
        raise SpecificationError("need at least one spec to compose")
    p = specs[0].p
    if any(s.p != p for s in specs):
        raise SpecificationError("specs must share dimensions")
    temporal = None
    for s in specs:
        if s.temporal_order is not None:
            if temporal is not None and temporal != s.temporal_order:
                raise SpecificationError("specs declare conflicting temporal orders")
            temporal = s.temporal_order
    subject_var = None
    for s in specs:
        if s.subject_effect_var is not None:
            if subject_var is not None and subject_var != s.subject_effect_var:
                raise SpecificationError(
                    "specs declare conflicting subject-effect variances"
                )
            subject_var = s.subject_effect_var

    blocks: list[LatentBlock] = []
    merged: list[MechanismRule] = []
    shifted_rules: list[list[MechanismRule]] = []
    for s in specs:
        offset = len(blocks)
        blocks.extend(s.blocks)
        rules = []
        for rule in s.rules:
            rules.append(_shift_block_refs(rule, offset))
        shifted_rules.append(rules)
    for j in range(p):
        clauses: list[Clause] = []
        scope = None
        for rules in shifted_rules:
            rule = rules[j]
            if rule.subject_scope:
                if scope is not None and scope != rule.subject_scope:
                    raise SpecificationError(
                        f"column {j}: conflicting subject scopes; compose the "
                        "scoped clauses explicitly instead"
                    )
                scope = rule.subject_scope
            clauses.extend(rule.clauses)
        merged.append(MechanismRule(j, tuple(clauses), scope))

    deps: dict[int, set[int]] = {j: set() for j in range(p)}
    for rule in merged:
        for ref in rule.refs():
            if ref.kind == "mask":
                deps[rule.target].add(ref.index)
    order = specs[0].simulation_order
    position = {j: k for k, j in enumerate(order)}
    if any(position[d] >= position[j] for j in range(p) for d in deps[j]):
        order = _toposort(p, deps)

    names = next((s.col_names for s in specs if s.col_names is not None), None)
    latent = frozenset().union(*(s.latent_columns for s in specs))
    return MechanismSpec(
        rules=tuple(merged),
        simulation_order=order,
        subject_effect_var=subject_var,
        blocks=tuple(blocks),
        latent_columns=latent,
        temporal_order=temporal,
        col_names=names,
    )


def _shift_block_refs(rule: MechanismRule, offset: int) -> MechanismRule:
    if offset == 0:
        return rule

    def shift_ref(ref: PredictorRef) -> PredictorRef:
        if ref.kind == "block":
            return replace(ref, index=ref.index + offset)
        return ref

    def shift_pred(pred: Predicate | None):
        if pred is None:
            return None
        return tuple(replace(c, ref=shift_ref(c.ref)) for c in pred)

    clauses: list[Clause] = []
    for c in rule.clauses:
        if isinstance(c, LogisticClause):
            clauses.append(
                replace(c, terms=tuple((shift_ref(r), b) for r, b in c.terms))
            )
        elif isinstance(c, TableClause):
            clauses.append(replace(c, parents=tuple(shift_ref(r) for r in c.parents)))
        elif isinstance(c, ForceClause):
            clauses.append(replace(c, when=shift_pred(c.when)))
        else:
            clauses.append(replace(c, when=shift_pred(c.when)))
    return MechanismRule(rule.target, tuple(clauses), shift_pred(rule.subject_scope))


# ---------------------------------------------------------------------------
# Spec files: canonical JSON, round-trippable byte for byte.
# ---------------------------------------------------------------------------


def _ref_to_dict(ref: PredictorRef) -> dict:
    d: dict = {"kind": ref.kind}
    if ref.index is not None:
        d["index"] = ref.index
    if ref.scale != 1.0:
        d["scale"] = ref.scale
    if ref.shift != 0.0:
        d["shift"] = ref.shift
    return d


def _ref_from_dict(d: Mapping) -> PredictorRef:
    return PredictorRef(
        d["kind"], d.get("index"), float(d.get("scale", 1.0)), float(d.get("shift", 0.0))
    )


def _pred_to_list(pred: Predicate | None):
    if pred is None:
        return None
    return [
        {"ref": _ref_to_dict(c.ref), "op": c.op, "value": c.value} for c in pred
    ]


def _pred_from_list(items) -> Predicate | None:
    if items is None:
        return None
    return tuple(
        Comparison(_ref_from_dict(d["ref"]), d["op"], float(d["value"]))
        for d in items
    )


def _clause_to_dict(c: Clause) -> dict:
    if isinstance(c, LogisticClause):
        return {
            "type": "logistic",
            "intercept": c.intercept,
            "terms": [[_ref_to_dict(r), coef] for r, coef in c.terms],
        }
    if isinstance(c, TableClause):
        return {
            "type": "table",
            "parents": [_ref_to_dict(r) for r in c.parents],
            "probs": [[list(k), v] for k, v in c.probs],
        }
    if isinstance(c, ForceClause):
        return {"type": "force", "when": _pred_to_list(c.when), "value": c.value}
    return {"type": "logical", "when": _pred_to_list(c.when)}


def _clause_from_dict(d: Mapping) -> Clause:
    t = d["type"]
    if t == "logistic":
        return LogisticClause(
            float(d["intercept"]),
            tuple((_ref_from_dict(r), float(coef)) for r, coef in d["terms"]),
        )
    if t == "table":
        return TableClause(
            tuple(_ref_from_dict(r) for r in d["parents"]),
            tuple(sorted((tuple(int(b) for b in k), float(v)) for k, v in d["probs"])),
        )
    if t == "force":
        return ForceClause(_pred_from_list(d["when"]), int(d["value"]))
    if t == "logical":
        return LogicalClause(_pred_from_list(d["when"]))
    raise SpecificationError(f"unknown clause type {t!r}")


def spec_to_dict(spec: MechanismSpec) -> dict:
    label = spec.declared_label
    return {
        "columns": None if spec.col_names is None else list(spec.col_names),
        "simulation_order": list(spec.simulation_order),
        "temporal_order": (
            None if spec.temporal_order is None else list(spec.temporal_order)
        ),
        "subject_effect_var": spec.subject_effect_var,
        "blocks": [{"prob": b.prob} for b in spec.blocks],
        "latent_columns": sorted(spec.latent_columns),
        "declared_label": (
            None
            if label is None
            else {
                "data_dependence": label.data_dependence,
                "structure": label.structure,
                "shape": label.shape,
                "determinism": label.determinism,
                "sign": label.sign,
            }
        ),
        "rules": [
            {
                "target": r.target,
                "subject_scope": _pred_to_list(r.subject_scope),
                "clauses": [_clause_to_dict(c) for c in r.clauses],
            }
            for r in spec.rules
        ],
    }


def spec_from_dict(d: Mapping) -> MechanismSpec:
    label = d.get("declared_label")
    return MechanismSpec(
        rules=tuple(
            MechanismRule(
                int(r["target"]),
                tuple(_clause_from_dict(c) for c in r["clauses"]),
                _pred_from_list(r.get("subject_scope")),
            )
            for r in d["rules"]
        ),
        simulation_order=tuple(d["simulation_order"]),
        subject_effect_var=(
            None
            if d.get("subject_effect_var") is None
            else float(d["subject_effect_var"])
        ),
        blocks=tuple(LatentBlock(float(b["prob"])) for b in d.get("blocks", [])),
        latent_columns=frozenset(d.get("latent_columns", [])),
        temporal_order=(
            None if d.get("temporal_order") is None else tuple(d["temporal_order"])
        ),
        declared_label=(
            None
            if label is None
            else TaxonomyLabel(
                label["data_dependence"],
                label["structure"],
                label["shape"],
                label["determinism"],
                label.get("sign"),
            )
        ),
        col_names=tuple(d["columns"]) if d.get("columns") else None,
    )


def dumps_spec(spec: MechanismSpec) -> str:
    """Canonical text form (stable key order, trailing newline)."""
    return json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n"


def save_spec(spec: MechanismSpec, path: str | Path) -> None:
    Path(path).write_text(dumps_spec(spec))


def loads_spec(text: str) -> MechanismSpec:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecificationError(f"spec file is not valid JSON: {exc}") from None
    return spec_from_dict(payload)


def load_spec(path: str | Path) -> MechanismSpec:
    return loads_spec(Path(path).read_text())
