"""Label engineering: vtr binarization, sdr sample selection and weighting,
and the cross-stage look-ahead conversion label."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InputError
from .features import WIDTH, FeatureBatch, Featurizer, FeatureVector
from .worldsim import SessionLog

OBJECTIVES = ("vtr", "cvr", "sdr", "ctr", "sdr_star", "cvr_star")
FSTAGE_OBJECTIVES = ("vtr", "cvr", "sdr")
ESTAGE_OBJECTIVES = ("ctr", "sdr_star", "cvr_star")

ALL_POSITIONS = "all_positions"
FIRST_POSITION_ONLY = "first_position_only"
SDR_MODES = (ALL_POSITIONS, FIRST_POSITION_ONLY)

_EMPTY = FeatureVector((), ())


@dataclass(frozen=True)
class LabelSpec:
    vtr_threshold: float = 5.0
    sdr_mode: str = ALL_POSITIONS
    conflict_filter: bool = False

    def __post_init__(self):
        if not self.vtr_threshold > 0:
            raise ConfigError("vtr_threshold must be positive")
        if self.sdr_mode not in SDR_MODES:
            raise ConfigError(f"sdr_mode must be one of {SDR_MODES}")


@dataclass(frozen=True)
class TrainingSample:
    features: FeatureVector
    objective: str
    label: int
    weight: float
    # ((user_id, day, session_index), position); position 0 marks E-stage samples
    source: tuple[tuple[int, int, int], int]

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "y": self.label,
            "z": self.weight,
            "source": [list(self.source[0]), self.source[1]],
            "features": self.features.to_list(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingSample":
        (key, pos) = data["source"]
        return cls(FeatureVector.from_list(data["features"]), data["objective"],
                   int(data["y"]), float(data["z"]), (tuple(key), int(pos)))


def binarize_vtr(view_time: float, threshold: float) -> int:
    """1 iff the view strictly exceeds ``threshold`` seconds."""
    if view_time < 0:
        raise InputError(f"negative view time {view_time}")
    if not threshold > 0:
        raise InputError("threshold must be positive")
    return int(view_time > threshold)


def sdr_samples(
    session: SessionLog,
    mode: str = ALL_POSITIONS,
    conflict_filter: bool = False,
    features: Sequence[FeatureVector] | None = None,
) -> list[TrainingSample]:
    """Swipe-down samples over exposed F-stage slots.

    With ``conflict_filter`` an exit that followed a conversion keeps its label
    but gets weight 0, so it is neither positive nor negative in training.
    ``features`` optionally supplies one vector per F-stage slot.
    """
    if mode not in SDR_MODES:
        raise InputError(f"unknown sdr mode {mode!r}")
    out = []
    for idx, slot in enumerate(session.fstage_slots):
        if not slot.exposed:
            break
        if mode == FIRST_POSITION_ONLY and slot.position != 1:
            break
        weight = 0.0 if (conflict_filter and slot.swiped_down == 0 and slot.converted == 1) else 1.0
        fv = features[idx] if features is not None else _EMPTY
        out.append(TrainingSample(fv, "sdr", slot.swiped_down, weight, (session.key, slot.position)))
    return out


def lookahead_cvr_label(session: SessionLog) -> int:
    return int(sum(s.converted for s in session.fstage_slots) > 0)


def build_training_set(
    logs: Iterable[SessionLog], spec: LabelSpec, featurizer: Featurizer | None = None
) -> list[TrainingSample]:
    """Samples for all six objectives.

    E-stage: one ``ctr`` sample per examined impression, one ``sdr_star`` per
    click, one ``cvr_star`` per F-stage entry.  F-stage: one ``vtr`` and one
    ``cvr`` per exposed slot, ``sdr`` per :func:`sdr_samples`.
    """
    out: list[TrainingSample] = []
    for log in logs:
        key = log.key
        impressions = log.impressions
        if featurizer is not None and impressions:
            e_feats = Featurizer.vectors(featurizer.estage(log.user_id, list(impressions)))
        else:
            e_feats = [_EMPTY] * len(impressions)
        for pos, fv in enumerate(e_feats, start=1):
            out.append(TrainingSample(fv, "ctr", int(log.clicked_position == pos), 1.0, (key, 0)))
        if not log.clicked:
            continue
        trig_fv = e_feats[-1]
        out.append(TrainingSample(trig_fv, "sdr_star", log.entered_fstage, 1.0, (key, 0)))
        if not log.entered_fstage:
            continue
        out.append(TrainingSample(trig_fv, "cvr_star", lookahead_cvr_label(log), 1.0, (key, 0)))

        exposed = log.exposed_slots
        if featurizer is not None:
            f_feats = Featurizer.vectors(featurizer.fstage(
                log.user_id, log.trigger_item_id,
                [s.item_id for s in exposed], [s.position for s in exposed]))
        else:
            f_feats = [_EMPTY] * len(exposed)
        for slot, fv in zip(exposed, f_feats):
            src = (key, slot.position)
            out.append(TrainingSample(fv, "vtr", binarize_vtr(slot.view_time, spec.vtr_threshold), 1.0, src))
            out.append(TrainingSample(fv, "cvr", slot.converted, 1.0, src))
        out.extend(sdr_samples(log, spec.sdr_mode, spec.conflict_filter, f_feats))
    return out


def training_arrays(
    logs: Iterable[SessionLog], spec: LabelSpec, featurizer: Featurizer
) -> dict[str, tuple[FeatureBatch, np.ndarray, np.ndarray]]:
    """Same samples as :func:`build_training_set`, grouped by objective as arrays.

    Rows keep the per-objective order of the sample list, so training on
    either form gives the same model.
    """
    parts: dict[str, list] = {o: [] for o in OBJECTIVES}

    def add(obj, batch, y, z):
        parts[obj].append((batch, np.asarray(y, dtype=np.float64), np.asarray(z, dtype=np.float64)))

    for log in logs:
        impressions = log.impressions
        if not impressions:
            continue
        e = featurizer.estage(log.user_id, list(impressions))
        n = len(impressions)
        y = np.zeros(n)
        if log.clicked_position is not None:
            y[log.clicked_position - 1] = 1.0
        add("ctr", e, y, np.ones(n))
        if not log.clicked:
            continue
        trig = e.take(slice(n - 1, n))
        add("sdr_star", trig, [log.entered_fstage], [1.0])
        if not log.entered_fstage:
            continue
        add("cvr_star", trig, [lookahead_cvr_label(log)], [1.0])
        exposed = log.exposed_slots
        f = featurizer.fstage(log.user_id, log.trigger_item_id,
                              [s.item_id for s in exposed], [s.position for s in exposed])
        add("vtr", f, [binarize_vtr(s.view_time, spec.vtr_threshold) for s in exposed], np.ones(len(exposed)))
        add("cvr", f, [s.converted for s in exposed], np.ones(len(exposed)))
        sdr = sdr_samples(log, spec.sdr_mode, spec.conflict_filter)
        add("sdr", f.take(slice(0, len(sdr))), [s.label for s in sdr], [s.weight for s in sdr])

    out = {}
    for obj, rows in parts.items():
        if not rows:
            continue
        out[obj] = (FeatureBatch(np.concatenate([r[0].ids for r in rows]),
                                 np.concatenate([r[0].values for r in rows])),
                    np.concatenate([r[1] for r in rows]), np.concatenate([r[2] for r in rows]))
    return out


def count_by_objective(samples: Iterable[TrainingSample]) -> dict[str, int]:
    counts = {o: 0 for o in OBJECTIVES}
    for s in samples:
        counts[s.objective] += 1
    return counts


@dataclass(frozen=True)
class ValidationSet:
    """Exposed F-stage slots with labels and weights for vtr, cvr and sdr."""

    features: FeatureBatch
    labels: dict[str, np.ndarray]
    weights: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.features)


def validation_set(logs: Iterable[SessionLog], spec: LabelSpec, featurizer: Featurizer) -> ValidationSet:
    """All exposed F-slots; the sdr weight follows ``spec.conflict_filter``.

    The sdr position mode is a training-time sample selection and is not
    applied here.
    """
    batches, y_vtr, y_cvr, y_sdr, z_sdr = [], [], [], [], []
    for log in logs:
        exposed = log.exposed_slots
        if not exposed:
            continue
        batches.append(featurizer.fstage(log.user_id, log.trigger_item_id,
                                         [s.item_id for s in exposed],
                                         [s.position for s in exposed]))
        for s in exposed:
            y_vtr.append(binarize_vtr(s.view_time, spec.vtr_threshold))
            y_cvr.append(s.converted)
            y_sdr.append(s.swiped_down)
            conflict = spec.conflict_filter and s.swiped_down == 0 and s.converted == 1
            z_sdr.append(0.0 if conflict else 1.0)
    if batches:
        feats = FeatureBatch(np.concatenate([b.ids for b in batches]),
                             np.concatenate([b.values for b in batches]))
    else:
        feats = FeatureBatch(np.zeros((0, WIDTH), np.int64), np.zeros((0, WIDTH)))
    n = len(y_cvr)
    return ValidationSet(
        feats,
        {"vtr": np.array(y_vtr, dtype=np.int64), "cvr": np.array(y_cvr, dtype=np.int64),
         "sdr": np.array(y_sdr, dtype=np.int64)},
        {"vtr": np.ones(n), "cvr": np.ones(n), "sdr": np.array(z_sdr, dtype=np.float64)},
    )
