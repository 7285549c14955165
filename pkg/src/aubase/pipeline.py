"""Two-phase damage detection with temperature-aware baseline selection.

Phase 1 (training) runs per actuation step on baseline records only:
wavelet features are extracted at the entropy-selected level, unfolded per
experiment, and split 70/30 into training and validation experiments. A SOM
is batch-trained on the training fraction and clustered (density + border
merging), which discovers the operating-condition groups without being told
how many there are. Every cluster with enough members gets its own group
scaling, its own PCA model at the configured variance share, a quantization
error gate (q95 of its members), and an SPE alarm threshold (95th percentile
of its members' SPE).

Phase 2 (detection) picks, for each incoming experiment and step, the
cluster whose prototype matches best. A quantization error above the gate
means no trained baseline explains the data: the experiment is flagged
novel, which short-circuits to damage. Otherwise the SPE against the
selected cluster's model is collected into a vector (one entry per step);
the log-scaled vectors of the batch plus the held-out validation baselines
feed a second-level SOM whose clusters separate pristine data from damage
classes.

The validation fraction never touches any model parameter or threshold; it
only provides reference SPE vectors and calibration statistics.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, asdict

import numpy as np

from . import ds2l, pca, som, wavelet
from .errors import (
    DegenerateDataError,
    InvalidArgumentError,
    LayoutError,
)
from .fusion import FeatureMatrix, build_step_layouts, unfold

QUANTILE = 0.95


@dataclass
class PipelineConfig:
    train_frac: float = 0.70
    variance_threshold: float = 0.95
    max_level: int = wavelet.DEFAULT_MAX_LEVEL
    level: int | None = None  # override the entropy-based choice
    grid: tuple | None = None  # None -> size heuristic
    second_grid: tuple | None = None
    epochs: int = som.DEFAULT_EPOCHS
    lambda_start: float | None = None
    lambda_end: float = 1.0
    kernel_form: str = "normalized"
    init: str = "linear"
    theta: float = 0.45
    rho: float | None = None
    labeled_decisions: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid) if self.grid else None
        d["second_grid"] = list(self.second_grid) if self.second_grid else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidArgumentError(f"unknown pipeline config fields: {sorted(extra)}")
        kwargs = dict(d)
        for key in ("grid", "second_grid"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class ClusterModel:
    model: pca.PcaModel | None
    q95: float
    spe_threshold: float | None
    n_members: int


@dataclass
class StepModel:
    actuator_id: int
    level: int
    sensor_ids: list
    feature_width: int
    map: som.SomModel
    rho: float
    theta: float
    partition: ds2l.ClusterPartition
    clusters: dict  # cluster id -> ClusterModel
    validation_exceedance: float | None = None


@dataclass
class SpeVector:
    key: str
    temperature_c: float
    state: str
    severity: float
    spe: list
    novelty: list
    normalized: list


@dataclass
class BaselineBank:
    config: PipelineConfig
    step_ids: list
    steps: dict  # actuator id -> StepModel
    train_keys: list
    val_keys: list
    validation: list  # list[SpeVector] for the held-out baselines

    def state_tag(self) -> str:
        return "baseline-bank"


@dataclass
class SelectionResult:
    novel: bool
    cluster: int | None
    bmu: int
    qe: float


def _split_indices(n: int, train_frac: float, seed: int):
    if n < 2:
        raise InvalidArgumentError("need at least 2 experiments per step to split")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    order = rng.permutation(n)
    n_train = int(round(train_frac * n))
    n_train = max(1, min(n_train, n - 1))
    return sorted(order[:n_train].tolist()), sorted(order[n_train:].tolist())


def _modal_level(records, config: PipelineConfig) -> int:
    votes = Counter()
    for rec in records:
        votes[wavelet.select_level(rec.samples, max_level=config.max_level)] += 1
    # most common level; ties resolve toward the deeper decomposition
    best = max(votes.items(), key=lambda kv: (kv[1], kv[0]))
    return best[0]


def _features_for(records, level: int) -> dict:
    return {rec.id: wavelet.extract_features(rec.samples, level) for rec in records}


def _quantile(values: np.ndarray) -> float:
    return float(np.quantile(np.asarray(values, dtype=float), QUANTILE, method="linear"))


def train_phase1(records, config: PipelineConfig | None = None) -> BaselineBank:
    """Build the per-step baseline bank from baseline records."""
    config = config or PipelineConfig()
    records = list(records)
    if not records:
        raise InvalidArgumentError("no records to train on")
    bad = [r.id for r in records if r.state != "baseline"]
    if bad:
        raise InvalidArgumentError(
            f"training expects baseline records only; found {len(bad)} others "
            f"(first: {bad[0]})"
        )
    layouts = build_step_layouts(records)
    step_ids = sorted(layouts)
    key_lists = {s: [slot.key for slot in layouts[s].experiments] for s in step_ids}
    ref_keys = key_lists[step_ids[0]]
    for s in step_ids[1:]:
        if key_lists[s] != ref_keys:
            raise LayoutError(
                f"steps {step_ids[0]} and {s} disagree on experiment keys; "
                "every step must cover the same conditions and repeats"
            )
    train_idx, val_idx = _split_indices(len(ref_keys), config.train_frac, config.seed)
    by_id = {r.id: r for r in records}

    steps = {}
    for si, s in enumerate(step_ids):
        layout = layouts[s]
        train_slots = [layout.experiments[i] for i in train_idx]
        train_rec_ids = [rid for slot in train_slots for rid in slot.record_ids.values()]
        if config.level is not None:
            level = config.level
        else:
            level = _modal_level([by_id[rid] for rid in train_rec_ids], config)
        features = _features_for([by_id[rid] for slot in layout.experiments
                                  for rid in slot.record_ids.values()], level)
        fm_all = unfold(features, layout)
        fm_train = fm_all.subset(train_idx)

        grid = config.grid or som.default_grid(fm_train.n)
        model = som.init_som(
            grid,
            fm_train.values,
            mode=config.init,
            seed=np.random.SeedSequence([config.seed, 2, si]),
            kernel_form=config.kernel_form,
            lambda_start=config.lambda_start,
            lambda_end=config.lambda_end,
        )
        model, _ = som.train(model, fm_train.values, epochs=config.epochs)
        enriched = ds2l.enrich(model, fm_train.values, rho=config.rho)
        partition = ds2l.cluster(enriched, theta=config.theta)

        qe_all = np.sqrt(
            np.sum((fm_train.values - model.weights[enriched.bmu1]) ** 2, axis=1)
        )
        clusters = {}
        for cid in range(partition.n_clusters):
            member_idx = np.nonzero(partition.datum_label == cid)[0]
            q95 = _quantile(qe_all[member_idx])
            cluster_model = None
            threshold = None
            if member_idx.size >= 2:
                try:
                    cluster_model = pca.fit(
                        fm_train.subset(member_idx.tolist()),
                        variance_threshold=config.variance_threshold,
                    )
                    threshold = _quantile(
                        pca.spe(cluster_model, fm_train.values[member_idx])
                    )
                except DegenerateDataError:
                    cluster_model = None
                    threshold = None
            clusters[cid] = ClusterModel(
                model=cluster_model,
                q95=q95,
                spe_threshold=threshold,
                n_members=int(member_idx.size),
            )
        steps[s] = StepModel(
            actuator_id=s,
            level=level,
            sensor_ids=list(layout.sensor_ids),
            feature_width=fm_all.m,
            map=model,
            rho=enriched.rho,
            theta=config.theta,
            partition=partition,
            clusters=clusters,
        )

    bank = BaselineBank(
        config=config,
        step_ids=step_ids,
        steps=steps,
        train_keys=[ref_keys[i] for i in train_idx],
        val_keys=[ref_keys[i] for i in val_idx],
        validation=[],
    )
    _attach_validation(bank, layouts, val_idx, by_id)
    return bank


def _attach_validation(bank: BaselineBank, layouts, val_idx, by_id) -> None:
    """Score the held-out baselines and stash their SPE vectors in the bank."""
    if not val_idx:
        return
    rows_by_step = {}
    for s in bank.step_ids:
        step = bank.steps[s]
        layout = layouts[s].subset(val_idx)
        features = _features_for(
            [by_id[rid] for slot in layout.experiments for rid in slot.record_ids.values()],
            step.level,
        )
        rows_by_step[s] = unfold(features, layout)
    exceed = {s: 0 for s in bank.step_ids}
    vectors = []
    for pos, key in enumerate(bank.val_keys):
        slot = rows_by_step[bank.step_ids[0]].meta[pos]
        spe_vals, novelty, normalized = [], [], []
        for s in bank.step_ids:
            row = rows_by_step[s].values[pos]
            sel = select_baseline(bank, s, row)
            _, spe_val, norm = _spe_against_bank(bank.steps[s], row, sel)
            spe_vals.append(spe_val)
            novelty.append(sel.novel)
            normalized.append(norm)
            if norm > 1.0:
                exceed[s] += 1
        vectors.append(
            SpeVector(
                key=key,
                temperature_c=slot.temperature_c,
                state="baseline",
                severity=0.0,
                spe=spe_vals,
                novelty=novelty,
                normalized=normalized,
            )
        )
    for s in bank.step_ids:
        bank.steps[s].validation_exceedance = exceed[s] / len(bank.val_keys)
    bank.validation = vectors


def select_baseline(bank: BaselineBank, step: int, feature_row) -> SelectionResult:
    """Pick the baseline cluster for one unfolded feature row, or flag novelty.

    Novel means: the BMU belongs to no cluster, the cluster has no usable
    model, or the quantization error exceeds the cluster's q95 gate.
    """
    if step not in bank.steps:
        raise InvalidArgumentError(f"bank has no actuation step {step}")
    sm = bank.steps[step]
    row = np.asarray(feature_row, dtype=float).ravel()
    if row.shape[0] != sm.feature_width:
        raise InvalidArgumentError(
            f"feature row has {row.shape[0]} columns, step {step} expects {sm.feature_width}"
        )
    unit = som.bmu(sm.map, row)
    qe = float(np.linalg.norm(row - sm.map.weights[unit]))
    cid = int(sm.partition.unit_label[unit])
    if cid < 0:
        return SelectionResult(novel=True, cluster=None, bmu=unit, qe=qe)
    cm = sm.clusters[cid]
    if cm.model is None or qe > cm.q95:
        return SelectionResult(novel=True, cluster=None, bmu=unit, qe=qe)
    return SelectionResult(novel=False, cluster=cid, bmu=unit, qe=qe)


def _fallback_cluster(sm: StepModel, row: np.ndarray, unit: int) -> int:
    """Cluster used for SPE when selection is novel: the BMU's cluster when
    modeled, else the modeled cluster with the nearest mode prototype."""
    cid = int(sm.partition.unit_label[unit])
    if cid >= 0 and sm.clusters[cid].model is not None:
        return cid
    best = None
    best_d = np.inf
    for k in sorted(sm.clusters):
        if sm.clusters[k].model is None:
            continue
        mode_w = sm.map.weights[sm.partition.modes[k]]
        d = float(np.linalg.norm(row - mode_w))
        if d < best_d:
            best, best_d = k, d
    if best is None:
        raise DegenerateDataError(
            f"step {sm.actuator_id} has no cluster with a usable model"
        )
    return best


def _spe_against_bank(sm: StepModel, row: np.ndarray, sel: SelectionResult):
    """(cluster used, SPE, SPE normalized by that cluster's alarm threshold)."""
    cid = sel.cluster if not sel.novel else _fallback_cluster(sm, row, sel.bmu)
    cm = sm.clusters[cid]
    spe_val = float(pca.spe(cm.model, row))
    thr = cm.spe_threshold
    if thr is None or thr <= 0.0:
        norm = math.inf if spe_val > 0.0 else 0.0
    else:
        norm = spe_val / thr
    return cid, spe_val, norm


@dataclass
class ExperimentResult:
    key: str
    temperature_c: float
    state: str
    severity: float
    per_step: dict  # step -> {selected, scored_cluster, qe, spe, normalized}
    novelty: bool
    spe_vector: SpeVector
    score: float
    second_cluster: int | None = None
    decision: str = ""


@dataclass
class DetectionReport:
    step_ids: list
    results: list  # list[ExperimentResult]
    incomplete: list  # experiment keys missing at least one step
    metadata: dict


def _experiment_rows(bank: BaselineBank, records):
    """Per-step unfolded rows for the given records, joined by experiment key."""
    layouts = build_step_layouts(records)
    missing = [s for s in bank.step_ids if s not in layouts]
    if missing:
        raise LayoutError(f"records do not cover bank steps {missing}")
    extra = [s for s in layouts if s not in bank.steps]
    if extra:
        raise LayoutError(f"records contain steps {extra} the bank was not trained on")
    rows = {}
    slots = {}
    for s in bank.step_ids:
        step = bank.steps[s]
        layout = layouts[s]
        if layout.sensor_ids != step.sensor_ids:
            raise LayoutError(
                f"step {s}: sensing channels {layout.sensor_ids} do not match "
                f"the bank ({step.sensor_ids})"
            )
        features = _features_for(
            [r for r in records if r.actuator_id == s], step.level
        )
        fm = unfold(features, layout)
        rows[s] = {slot.key: fm.values[i] for i, slot in enumerate(fm.meta)}
        slots[s] = {slot.key: slot for slot in fm.meta}
    ordered_keys = [slot.key for slot in layouts[bank.step_ids[0]].experiments]
    complete, incomplete = [], []
    for key in ordered_keys:
        if all(key in rows[s] for s in bank.step_ids):
            complete.append(key)
        else:
            incomplete.append(key)
    known = set(ordered_keys)
    for s in bank.step_ids[1:]:
        for key in rows[s]:
            if key not in known:
                incomplete.append(key)
                known.add(key)
    return rows, slots, complete, incomplete


def detect(bank: BaselineBank, records, config: PipelineConfig | None = None) -> DetectionReport:
    """Score a batch of experiments against the bank and classify them."""
    config = config or bank.config
    records = list(records)
    if not records:
        raise InvalidArgumentError("no records to detect on")
    rows, slots, complete, incomplete = _experiment_rows(bank, records)
    if not complete:
        raise LayoutError("no experiment covers every bank step")

    results = []
    for key in complete:
        slot = slots[bank.step_ids[0]][key]
        per_step = {}
        spe_vals, novelty, normalized = [], [], []
        for s in bank.step_ids:
            row = rows[s][key]
            sel = select_baseline(bank, s, row)
            cid, spe_val, norm = _spe_against_bank(bank.steps[s], row, sel)
            per_step[s] = {
                "selected": "novel" if sel.novel else sel.cluster,
                "scored_cluster": cid,
                "qe": sel.qe,
                "spe": spe_val,
                "normalized": norm,
            }
            spe_vals.append(spe_val)
            novelty.append(sel.novel)
            normalized.append(norm)
        any_novel = any(novelty)
        score = math.inf if any_novel else max(normalized)
        vec = SpeVector(
            key=key,
            temperature_c=slot.temperature_c,
            state=slot.state,
            severity=slot.severity,
            spe=spe_vals,
            novelty=novelty,
            normalized=normalized,
        )
        results.append(
            ExperimentResult(
                key=key,
                temperature_c=slot.temperature_c,
                state=slot.state,
                severity=slot.severity,
                per_step=per_step,
                novelty=any_novel,
                spe_vector=vec,
                score=score,
            )
        )

    _second_level(bank, results, config)
    metadata = {
        "config": config.to_dict(),
        "seed": config.seed,
        "levels": {s: bank.steps[s].level for s in bank.step_ids},
        "n_validation_references": len(bank.validation),
    }
    return DetectionReport(
        step_ids=list(bank.step_ids),
        results=results,
        incomplete=incomplete,
        metadata=metadata,
    )


def _state_tag(state: str, severity: float) -> str:
    return "baseline" if state == "baseline" else f"damage{severity:g}"


def _second_level(bank: BaselineBank, results, config: PipelineConfig) -> None:
    """Cluster log-scaled SPE vectors (batch plus validation references)."""
    reference = bank.validation
    batch_z = [np.log1p(np.asarray(r.spe_vector.spe)) for r in results]
    ref_z = [np.log1p(np.asarray(v.spe)) for v in reference]
    z = np.vstack(ref_z + batch_z) if (ref_z or batch_z) else np.empty((0, 0))
    if z.shape[0] < 4:
        for r in results:
            if r.novelty:
                r.decision = "novel/damage"
            elif r.score > 1.0:
                r.decision = "damage-suspect"
            else:
                r.decision = "baseline-like"
        return
    # SPE vectors clump tightly; keep the map dense (>= ~4 points per unit)
    # so stray tail points cannot occupy isolated units of their own
    grid = config.second_grid
    if grid is None:
        rows_default, _ = som.default_grid(z.shape[0])
        side = max(2, min(rows_default, int(np.sqrt(z.shape[0] / 4.0))))
        grid = (side, side)
    model = som.init_som(
        grid,
        z,
        mode=config.init,
        seed=np.random.SeedSequence([config.seed, 3]),
        kernel_form=config.kernel_form,
        lambda_start=config.lambda_start,
        lambda_end=config.lambda_end,
    )
    model, _ = som.train(model, z, epochs=config.epochs)
    enriched = ds2l.enrich(model, z, rho=config.rho)
    partition = ds2l.cluster(enriched, theta=config.theta)

    tags = ["baseline"] * len(reference) + [
        _state_tag(r.state, r.severity) for r in results
    ]
    majority = {}
    for cid in range(partition.n_clusters):
        members = [tags[i] for i in np.nonzero(partition.datum_label == cid)[0]]
        counts = Counter(members)
        # ties prefer the baseline tag (fewer false alarms), then sort order
        top = max(sorted(counts.items()), key=lambda kv: (kv[1], kv[0] == "baseline"))
        majority[cid] = top[0]
    offset = len(reference)
    for i, r in enumerate(results):
        cid = int(partition.datum_label[offset + i])
        r.second_cluster = cid
        if r.novelty:
            r.decision = "novel/damage"
        elif not config.labeled_decisions:
            r.decision = f"cluster-{cid}"
        elif majority[cid] == "baseline":
            r.decision = f"baseline-{cid}"
        else:
            r.decision = f"damage-{cid}"


# ---------------------------------------------------------------------------
# ablation: one all-temperature PCA model per step
# ---------------------------------------------------------------------------

@dataclass
class StepComparison:
    step: int
    r_mono: int
    r_clusters: dict  # cluster id -> retained components
    auc_proposed: float
    auc_mono: float
    fpr_calibrated_proposed: float
    fpr_calibrated_mono: float
    fpr_theoretical_mono: float
    fpr_tpr95_proposed: float
    fpr_tpr95_mono: float
    n_pos: int
    n_neg: int
    roc_proposed: object = None
    roc_mono: object = None


@dataclass
class ComparisonReport:
    steps: list  # list[StepComparison]
    summary: dict
    bank: BaselineBank


def compare_monolithic(records, config: PipelineConfig | None = None) -> ComparisonReport:
    """Train the clustered bank and a single all-temperature PCA per step,
    then score the same paired hold-out (held-out baselines as negatives,
    damage experiments as positives) under both.

    Reported per step: retained components, AUC, and three false-positive
    readings: at each method's own calibrated threshold (95th-percentile SPE
    construction for both), at the monolithic model's normal-theory control
    limit, and at the high-sensitivity ROC operating point (the smallest FPR
    reaching 95% detection), which is the comparison the ROC study uses.
    """
    from . import evaluate

    config = config or PipelineConfig()
    records = list(records)
    baselines = [r for r in records if r.state == "baseline"]
    damages = [r for r in records if r.state != "baseline"]
    if not baselines or not damages:
        raise InvalidArgumentError(
            "comparison needs both baseline and damage records"
        )
    bank = train_phase1(baselines, config)
    base_layouts = build_step_layouts(baselines)
    dmg_layouts = build_step_layouts(damages)
    missing = [s for s in bank.step_ids if s not in dmg_layouts]
    if missing:
        raise LayoutError(f"damage records do not cover steps {missing}")
    by_id = {r.id: r for r in baselines}

    key_order = {k: i for i, k in enumerate(
        slot.key for slot in base_layouts[bank.step_ids[0]].experiments
    )}
    train_idx = [key_order[k] for k in bank.train_keys]
    val_idx = [key_order[k] for k in bank.val_keys]

    steps = []
    for s in bank.step_ids:
        sm = bank.steps[s]
        layout = base_layouts[s]
        features = _features_for(
            [by_id[rid] for slot in layout.experiments for rid in slot.record_ids.values()],
            sm.level,
        )
        fm_all = unfold(features, layout)
        fm_train = fm_all.subset(train_idx)
        fm_val = fm_all.subset(val_idx)

        mono = pca.fit(fm_train, variance_threshold=config.variance_threshold)
        mono_thr = _quantile(pca.spe(mono, fm_train.values))
        mono_jm = pca.spe_control_limit(mono, alpha=1.0 - QUANTILE)

        dmg_features = _features_for(
            [r for r in damages if r.actuator_id == s], sm.level
        )
        fm_dmg = unfold(dmg_features, dmg_layouts[s])

        prop_scores, mono_scores, labels = [], [], []
        for values, label in ((fm_val.values, 0), (fm_dmg.values, 1)):
            for row in values:
                sel = select_baseline(bank, s, row)
                _, _, norm = _spe_against_bank(sm, row, sel)
                prop_scores.append(math.inf if sel.novel else norm)
                mono_scores.append(float(pca.spe(mono, row)))
                labels.append(label)
        prop_scores = np.array(prop_scores)
        mono_scores = np.array(mono_scores)
        labels = np.array(labels)

        roc_prop = evaluate.roc(prop_scores, labels)
        roc_mono = evaluate.roc(mono_scores, labels)
        steps.append(
            StepComparison(
                step=s,
                r_mono=mono.r,
                r_clusters={
                    cid: cm.model.r
                    for cid, cm in sm.clusters.items()
                    if cm.model is not None
                },
                auc_proposed=evaluate.auc(roc_prop),
                auc_mono=evaluate.auc(roc_mono),
                fpr_calibrated_proposed=evaluate.fpr_at(prop_scores, labels, 1.0),
                fpr_calibrated_mono=evaluate.fpr_at(mono_scores, labels, mono_thr),
                fpr_theoretical_mono=evaluate.fpr_at(mono_scores, labels, mono_jm),
                fpr_tpr95_proposed=evaluate.fpr_at_tpr(roc_prop, QUANTILE),
                fpr_tpr95_mono=evaluate.fpr_at_tpr(roc_mono, QUANTILE),
                n_pos=int(labels.sum()),
                n_neg=int(labels.size - labels.sum()),
                roc_proposed=roc_prop,
                roc_mono=roc_mono,
            )
        )

    mean_prop = float(np.mean([st.fpr_tpr95_proposed for st in steps]))
    mean_mono = float(np.mean([st.fpr_tpr95_mono for st in steps]))
    summary = {
        "mean_fpr_tpr95_proposed": mean_prop,
        "mean_fpr_tpr95_mono": mean_mono,
        "fpr_reduction_factor": (math.inf if mean_prop == 0.0 else mean_mono / mean_prop),
        "mean_auc_proposed": float(np.mean([st.auc_proposed for st in steps])),
        "mean_auc_mono": float(np.mean([st.auc_mono for st in steps])),
        "max_cluster_r": {
            st.step: max(st.r_clusters.values(), default=0) for st in steps
        },
        "r_mono": {st.step: st.r_mono for st in steps},
    }
    return ComparisonReport(steps=steps, summary=summary, bank=bank)
