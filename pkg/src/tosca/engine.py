"""Session bank, entropy-routed inference, benchmark scenarios, and the
module-bank container format.

A scenario walks the stages of a split plan.  The main method trains one
frozen-after-training module + head per stage and routes each test sample to
the session whose softmax output has least Shannon entropy.  Baselines share
the harness: sequential finetuning of a single module with a growing head,
joint training on all classes at once, and a prototype classifier with no
training at all.

Bank file layout (all little endian):

    magic    8 bytes  b"LUCABANK"
    version  u32      currently 1
    d, r     u32, u32
    entries  u32      count
    per entry: session_index u32, K u32, K class ids u32,
               W_down, W_up, V_down, V_up, W_head as row-major float32,
               then a u64 FNV-1a checksum of the entry's preceding bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from time import perf_counter

import numpy as np

from .data import FeatureDataset, SplitPlan
from .heads import (PrototypeBank, SessionHead, build_prototypes, extend_head,
                    head_forward, head_forward_batch, make_head,
                    prototype_classify_batch)
from .luca import (LucaConfig, LucaModule, init_luca, luca_forward,
                   luca_forward_batch, param_count)
from .numerics import shannon_entropy, softmax
from .optim import OptimConfig, train_epochs
from .rng import Xoshiro256StarStar, derive_seeds

METHODS = ("tosca", "tosca_r", "finetune", "joint", "simplecil")

BANK_MAGIC = b"LUCABANK"
BANK_VERSION = 1
FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_U64 = (1 << 64) - 1


@dataclass
class BankEntry:
    session_index: int
    module: LucaModule
    head: SessionHead

    @property
    def class_ids(self) -> tuple:
        return self.head.class_ids


class ModuleBank:
    """Ordered, class-disjoint collection of per-session modules."""

    def __init__(self, feature_dim: int):
        if feature_dim < 1:
            raise ValueError("dimensions must be positive")
        self.feature_dim = feature_dim
        self.entries: list[BankEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def class_ids(self) -> tuple:
        out = []
        for e in self.entries:
            out.extend(e.class_ids)
        return tuple(sorted(out))

    @property
    def rank(self) -> int:
        if not self.entries:
            return 0
        return self.entries[0].module.r

    def append(self, entry: BankEntry) -> None:
        if entry.module.d != self.feature_dim or entry.head.d != self.feature_dim:
            raise ValueError("dimension mismatch")
        if self.entries and entry.module.r != self.rank:
            raise ValueError("dimension mismatch")
        if entry.session_index != len(self.entries) + 1:
            raise ValueError("session index must be consecutive")
        seen = set(self.class_ids)
        if any(c in seen for c in entry.class_ids):
            raise ValueError("overlapping classes")
        self.entries.append(entry)

    def session_of_class(self, class_id: int) -> int:
        for e in self.entries:
            if class_id in e.class_ids:
                return e.session_index
        raise KeyError(class_id)


@dataclass
class ScenarioConfig:
    r: int = 48
    adapter_act: str = "gelu"
    gate_act: str = "sigmoid"
    gate_residual: bool = False
    reversed: bool = False
    normalize_entropy: bool = True
    optim: OptimConfig = field(default_factory=OptimConfig)

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("dimensions must be positive")
        # delegate activation validation
        self.luca_config()

    def luca_config(self) -> LucaConfig:
        return LucaConfig(adapter_act=self.adapter_act, gate_act=self.gate_act,
                          gate_residual=self.gate_residual, reversed=self.reversed)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "adapter_act": self.adapter_act,
            "gate_act": self.gate_act,
            "gate_residual": self.gate_residual,
            "reversed": self.reversed,
            "normalize_entropy": self.normalize_entropy,
            "lr_max": self.optim.lr_max,
            "lr_min": self.optim.lr_min,
            "epochs": self.optim.epochs,
            "batch_size": self.optim.batch_size,
            "lambda_l1": self.optim.lambda_l1,
            "l1_mode": self.optim.l1_mode,
            "momentum": self.optim.momentum,
        }


def train_session(bank: ModuleBank, train: FeatureDataset, class_ids,
                  cfg: ScenarioConfig, seed: int,
                  init_seed: int | None = None) -> ModuleBank:
    """Fit a fresh module + head on one session's classes and bank it.

    ``derive_seeds(seed, 2)`` splits the session seed into an init seed and a
    shuffle seed, so weight init and batch order come from independent
    streams and rerunning a session is bit-reproducible.  The scenario
    driver passes one shared ``init_seed`` for every session, so modules
    differ only through what they were trained on; parameter-space
    comparisons between sessions then measure training, not init noise.
    """
    ids = tuple(sorted(int(c) for c in class_ids))
    seen = set(bank.class_ids)
    if any(c in seen for c in ids):
        raise ValueError("overlapping classes")
    ds = train.subset(ids)
    if ds.n == 0:
        raise ValueError("empty session data")
    if ds.d != bank.feature_dim:
        raise ValueError("dimension mismatch")
    derived_init, shuffle_seed = derive_seeds(seed, 2)
    if init_seed is None:
        init_seed = derived_init
    module = init_luca(bank.feature_dim, cfg.r, cfg.luca_config(), init_seed)
    head = make_head(bank.feature_dim, ids)
    train_epochs(module, head, ds, cfg.optim, Xoshiro256StarStar(shuffle_seed))
    entry = BankEntry(session_index=len(bank) + 1, module=module, head=head)
    bank.append(entry)
    return bank


# ---------------------------------------------------------------------------
# Inference.

@dataclass
class Prediction:
    class_id: int
    session_index: int
    entropies: tuple  # raw nats, one per session
    distributions: tuple  # softmax vectors, one per session


def _entropy_scores(entropies, counts, normalize: bool):
    """Raw entropies, or entropy / ln K when session class counts differ."""
    if not normalize or len(set(counts)) <= 1:
        return list(entropies)
    scores = []
    for h, k in zip(entropies, counts):
        scores.append(0.0 if k == 1 else h / np.log(k))
    return scores


def predict(x, bank: ModuleBank, normalize_entropy: bool = True) -> Prediction:
    """Route one sample to the least-entropy session, then argmax there.

    Ties go to the lowest session index, and within a session to the lowest
    class id.  Entropies in the result stay unnormalized.
    """
    if not bank.entries:
        raise ValueError("empty bank")
    z = np.asarray(x, dtype=np.float64)
    if z.shape != (bank.feature_dim,):
        raise ValueError("dimension mismatch")
    entropies = []
    dists = []
    for e in bank.entries:
        feats = luca_forward(z, e.module)
        p = softmax(head_forward(feats, e.head))
        entropies.append(shannon_entropy(p))
        dists.append(p)
    counts = [len(e.class_ids) for e in bank.entries]
    scores = _entropy_scores(entropies, counts, normalize_entropy)
    best = 0
    for i in range(1, len(scores)):
        if scores[i] < scores[best]:
            best = i
    dist = dists[best]
    cls = bank.entries[best].class_ids[int(np.argmax(dist))]
    return Prediction(class_id=int(cls), session_index=best + 1,
                      entropies=tuple(float(h) for h in entropies),
                      distributions=tuple(dists))


def predict_batch(Z: np.ndarray, bank: ModuleBank,
                  normalize_entropy: bool = True):
    """Vectorized routing; returns (class ids, session indices) per row."""
    if not bank.entries:
        raise ValueError("empty bank")
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != bank.feature_dim:
        raise ValueError("dimension mismatch")
    n = Z.shape[0]
    counts = [len(e.class_ids) for e in bank.entries]
    normalize = normalize_entropy and len(set(counts)) > 1
    scores = np.empty((len(bank), n), dtype=np.float64)
    picks = np.empty((len(bank), n), dtype=np.int64)
    for i, e in enumerate(bank.entries):
        feats = luca_forward_batch(Z, e.module)
        logits = feats @ e.head.w.astype(np.float64)
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        logP = np.log(np.where(P > 0.0, P, 1.0))
        H = -(P * logP).sum(axis=1)
        ids = np.asarray(e.class_ids, dtype=np.int64)
        picks[i] = ids[np.argmax(P, axis=1)]
        if normalize:
            scores[i] = 0.0 if counts[i] == 1 else H / np.log(counts[i])
        else:
            scores[i] = H
    chosen = np.argmin(scores, axis=0)  # first min = lowest session
    classes = picks[chosen, np.arange(n)]
    return classes, chosen + 1


@dataclass
class StageEval:
    accuracy: float
    selection_accuracy: float


def _selection_rate(pred_classes, labels, class_groups) -> float:
    """Share of samples whose prediction lands in the true label's session."""
    hits = 0
    for p, t in zip(pred_classes, labels):
        hits += int(int(p) in class_groups[int(t)])
    return 100.0 * hits / len(labels)


def _group_by_stage(stage_lists) -> dict:
    groups = {}
    for classes in stage_lists:
        s = frozenset(int(c) for c in classes)
        for c in s:
            groups[c] = s
    return groups


def evaluate_stage(bank: ModuleBank, test: FeatureDataset,
                   normalize_entropy: bool = True) -> StageEval:
    if test.n == 0:
        raise ValueError("empty test set")
    classes, _sessions = predict_batch(test.features, bank, normalize_entropy)
    labels = test.labels.astype(np.int64)
    acc = 100.0 * float(np.mean(classes == labels))
    groups = _group_by_stage([e.class_ids for e in bank.entries])
    sel = _selection_rate(classes, labels, groups)
    return StageEval(accuracy=acc, selection_accuracy=sel)


def _eval_single(module, head, test: FeatureDataset, class_groups) -> StageEval:
    """Stage metrics for the single-model baselines (one shared head)."""
    if test.n == 0:
        raise ValueError("empty test set")
    Z = test.features.astype(np.float64)
    if module is not None:
        Z = luca_forward_batch(Z, module)
    logits = head_forward_batch(Z, head)
    ids = np.asarray(head.class_ids, dtype=np.int64)
    preds = ids[np.argmax(logits, axis=1)]
    labels = test.labels.astype(np.int64)
    acc = 100.0 * float(np.mean(preds == labels))
    sel = _selection_rate(preds, labels, class_groups)
    return StageEval(accuracy=acc, selection_accuracy=sel)


# ---------------------------------------------------------------------------
# Scenario driver.

@dataclass
class ScenarioReport:
    method: str
    seed: int
    config: dict
    stages: list  # dicts: {"index", "A_b", "selection_accuracy"}
    A_bar: float
    params_per_task: list
    wall_time_s: float
    artifacts: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "config": self.config,
            "stages": self.stages,
            "A_bar": self.A_bar,
            "params_per_task": self.params_per_task,
            "wall_time_s": self.wall_time_s,
        }


def run_scenario(train: FeatureDataset, test: FeatureDataset, splits: SplitPlan,
                 method: str = "tosca", cfg: ScenarioConfig | None = None,
                 seed: int = 1993) -> ScenarioReport:
    """Run one incremental scenario end to end.

    Stage b is always scored on the test rows of every class seen through
    stage b; A_bar averages those stage accuracies.  Each stage draws its own
    seed from the master via ``derive_seeds`` so later stages cannot perturb
    earlier ones.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    cfg = cfg if cfg is not None else ScenarioConfig()
    if method == "tosca_r":
        cfg = replace(cfg, reversed=True)
    if train.d != test.d:
        raise ValueError("dimension mismatch")
    covered = set(splits.classes_through(splits.num_stages))
    if not covered <= set(train.class_ids):
        raise ValueError("split mismatch")

    t0 = perf_counter()
    B = splits.num_stages
    d = train.d
    seeds = derive_seeds(seed, B + 1)
    stage_seeds, shared_init = seeds[:B], seeds[B]
    class_groups = _group_by_stage(splits.stages)
    stages = []
    params = []
    artifacts: dict = {}

    if method in ("tosca", "tosca_r"):
        bank = ModuleBank(d)
        for b, classes in enumerate(splits.stages, start=1):
            train_session(bank, train, classes, cfg, stage_seeds[b - 1],
                          init_seed=shared_init)
            ev = evaluate_stage(bank, test.subset(splits.classes_through(b)),
                                cfg.normalize_entropy)
            stages.append({"index": b, "A_b": ev.accuracy,
                           "selection_accuracy": ev.selection_accuracy})
            params.append(param_count(d, cfg.r) + d * len(classes))
        artifacts["bank"] = bank
    elif method == "finetune":
        module = None
        head = None
        for b, classes in enumerate(splits.stages, start=1):
            ids = tuple(sorted(int(c) for c in classes))
            ds = train.subset(ids)
            if ds.n == 0:
                raise ValueError("empty session data")
            init_seed, shuffle_seed = derive_seeds(stage_seeds[b - 1], 2)
            if module is None:
                module = init_luca(d, cfg.r, cfg.luca_config(), init_seed)
                head = make_head(d, ids)
                params.append(param_count(d, cfg.r) + d * len(ids))
            else:
                head = extend_head(head, ids)
                params.append(d * len(ids))
            train_epochs(module, head, ds, cfg.optim,
                         Xoshiro256StarStar(shuffle_seed))
            ev = _eval_single(module, head,
                              test.subset(splits.classes_through(b)),
                              class_groups)
            stages.append({"index": b, "A_b": ev.accuracy,
                           "selection_accuracy": ev.selection_accuracy})
        artifacts["module"] = module
        artifacts["head"] = head
    elif method == "joint":
        all_ids = splits.classes_through(B)
        ds = train.subset(all_ids)
        if ds.n == 0:
            raise ValueError("empty session data")
        init_seed, shuffle_seed = derive_seeds(stage_seeds[0], 2)
        module = init_luca(d, cfg.r, cfg.luca_config(), init_seed)
        head = make_head(d, all_ids)
        train_epochs(module, head, ds, cfg.optim,
                     Xoshiro256StarStar(shuffle_seed))
        for b in range(1, B + 1):
            ev = _eval_single(module, head,
                              test.subset(splits.classes_through(b)),
                              class_groups)
            stages.append({"index": b, "A_b": ev.accuracy,
                           "selection_accuracy": ev.selection_accuracy})
            params.append(param_count(d, cfg.r) + d * len(all_ids) if b == 1 else 0)
        artifacts["module"] = module
        artifacts["head"] = head
    else:  # simplecil
        proto = None
        for b, classes in enumerate(splits.stages, start=1):
            ds = train.subset(classes)
            if ds.n == 0:
                raise ValueError("empty session data")
            proto = build_prototypes(ds.features, ds.labels, proto)
            sub = test.subset(splits.classes_through(b))
            if sub.n == 0:
                raise ValueError("empty test set")
            preds = prototype_classify_batch(sub.features, proto)
            labels = sub.labels.astype(np.int64)
            acc = 100.0 * float(np.mean(preds == labels))
            sel = _selection_rate(preds, labels, class_groups)
            stages.append({"index": b, "A_b": acc,
                           "selection_accuracy": sel})
            params.append(d * len(classes))
        artifacts["prototypes"] = proto

    a_bar = float(np.mean([s["A_b"] for s in stages]))
    report = ScenarioReport(method=method, seed=seed, config=cfg.to_dict(),
                            stages=stages, A_bar=a_bar, params_per_task=params,
                            wall_time_s=perf_counter() - t0,
                            artifacts=artifacts)
    return report


# ---------------------------------------------------------------------------
# Diagnostics over a trained bank.

def module_orthogonality(bank: ModuleBank) -> float:
    """Mean |cosine| between flattened parameter vectors of distinct modules."""
    if len(bank) < 2:
        raise ValueError("need at least two modules")
    vecs = [e.module.flat_params() for e in bank.entries]
    norms = [float(np.linalg.norm(v)) for v in vecs]
    sims = []
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            if norms[i] == 0.0 or norms[j] == 0.0:
                sims.append(0.0)
            else:
                sims.append(abs(float(np.dot(vecs[i], vecs[j])))
                            / (norms[i] * norms[j]))
    return float(np.mean(sims))


def feature_shift(bank: ModuleBank, features: np.ndarray) -> tuple:
    """Per session, mean ||L(z) - z|| / ||z|| over the given rows."""
    Z = np.asarray(features, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != bank.feature_dim:
        raise ValueError("dimension mismatch")
    if Z.shape[0] == 0:
        raise ValueError("no samples")
    base = np.linalg.norm(Z, axis=1)
    if np.any(base == 0.0):
        raise ValueError("degenerate vector")
    out = []
    for e in bank.entries:
        moved = luca_forward_batch(Z, e.module)
        out.append(float(np.mean(np.linalg.norm(moved - Z, axis=1) / base)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Bank container.

def fnv1a(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _U64
    return h


def _entry_bytes(entry: BankEntry) -> bytes:
    m = entry.module
    head = entry.head
    parts = [struct.pack("<II", entry.session_index, head.num_classes)]
    parts.append(struct.pack(f"<{head.num_classes}I", *head.class_ids))
    for mat in (m.w_down, m.w_up, m.v_down, m.v_up, head.w):
        parts.append(np.ascontiguousarray(mat, dtype="<f4").tobytes())
    return b"".join(parts)


def entry_checksum(entry: BankEntry) -> int:
    """FNV-1a over the entry's serialized bytes; pins a trained session."""
    return fnv1a(_entry_bytes(entry))


def save_bank(bank: ModuleBank, path) -> None:
    with open(path, "wb") as fh:
        fh.write(BANK_MAGIC)
        fh.write(struct.pack("<IIII", BANK_VERSION, bank.feature_dim,
                             bank.rank, len(bank)))
        for entry in bank.entries:
            blob = _entry_bytes(entry)
            fh.write(blob)
            fh.write(struct.pack("<Q", fnv1a(blob)))


def load_bank(path, config: LucaConfig | None = None) -> ModuleBank:
    """Rebuild a bank; the container stores no activation choices, so pass
    the ``LucaConfig`` the modules were trained with (defaults otherwise)."""
    config = config or LucaConfig()
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(BANK_MAGIC) or blob[:len(BANK_MAGIC)] != BANK_MAGIC:
        raise ValueError("not a bank file")
    off = len(BANK_MAGIC)
    head_struct = struct.Struct("<IIII")
    if len(blob) < off + head_struct.size:
        raise ValueError("unexpected end of file")
    version, d, r, count = head_struct.unpack_from(blob, off)
    off += head_struct.size
    if version != BANK_VERSION:
        raise ValueError("unsupported version")
    if d < 1:
        raise ValueError("not a bank file")
    bank = ModuleBank(d)
    for _ in range(count):
        start = off
        if len(blob) < off + 8:
            raise ValueError("unexpected end of file")
        session_index, k = struct.unpack_from("<II", blob, off)
        off += 8
        if k < 1:
            raise ValueError("not a bank file")
        if len(blob) < off + 4 * k:
            raise ValueError("unexpected end of file")
        class_ids = struct.unpack_from(f"<{k}I", blob, off)
        off += 4 * k
        shapes = [(d, r), (r, d), (d, r), (r, d), (d, k)]
        mats = []
        for shape in shapes:
            nbytes = 4 * shape[0] * shape[1]
            if len(blob) < off + nbytes:
                raise ValueError("unexpected end of file")
            arr = np.frombuffer(blob, dtype="<f4", count=shape[0] * shape[1],
                                offset=off).reshape(shape).copy()
            mats.append(arr)
            off += nbytes
        if len(blob) < off + 8:
            raise ValueError("unexpected end of file")
        (stored,) = struct.unpack_from("<Q", blob, off)
        if fnv1a(blob[start:off]) != stored:
            raise ValueError("checksum mismatch")
        off += 8
        module = LucaModule(d=d, r=r, w_down=mats[0], w_up=mats[1],
                            v_down=mats[2], v_up=mats[3], config=config)
        head = SessionHead(class_ids=class_ids, w=mats[4])
        bank.append(BankEntry(session_index=session_index, module=module,
                              head=head))
    return bank
