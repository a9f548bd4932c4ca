"""CSV schemas, atomic file output, and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import tempfile
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .errors import ValidationError
from .model import GroupModel, Population, RiskParams, ScoreMap, SignalSpec, posterior_array, score_of_signal
from .panel import PanelCell
from .screening import CfReport
from .smm import MOMENT_NAMES, MomentVector

POPULATION_COLUMNS = ["id", "group", "theta", "s1", "s2", "posterior", "score", "defaulted"]
PANEL_COLUMNS = ["bank", "geo", "time", "group", "exam", "eligible", "q", "y", "weight"]
CF_COLUMNS = ["scenario", "group", "approval_rate", "type1", "type2", "threshold"]
ROC_COLUMNS = ["threshold", "fpr", "tpr"]
DECOMP_COLUMNS = ["cell", "auc_a", "auc_b", "auc_diff", "share_a", "share_b", "share_diff"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file + rename so readers never see partial output."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rows_to_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_population_csv(path: str, pop: Population) -> None:
    k = pop.signals.shape[1]
    rows = []
    for i in range(pop.n):
        rows.append([
            i,
            pop.model.label,
            float(pop.theta[i]),
            float(pop.signals[i, 0]),
            float(pop.signals[i, 1]) if k > 1 else "",
            float(pop.posterior[i]),
            float(pop.score[i]),
            int(pop.defaulted[i]),
        ])
    atomic_write_text(path, rows_to_csv(POPULATION_COLUMNS, rows))


def read_population_csv(path: str, model: GroupModel, score_map: ScoreMap) -> Population:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != POPULATION_COLUMNS:
            raise ValidationError(f"unexpected population header {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValidationError("empty population file")
    has_s2 = rows[0]["s2"] != ""
    theta = np.array([float(r["theta"]) for r in rows])
    cols = [np.array([float(r["s1"]) for r in rows])]
    if has_s2:
        cols.append(np.array([float(r["s2"]) for r in rows]))
    signals = np.column_stack(cols)
    return Population(
        model=model,
        score_map=score_map,
        seed=0,
        theta=theta,
        signals=signals,
        posterior=np.array([float(r["posterior"]) for r in rows]),
        score=np.array([float(r["score"]) for r in rows]),
        defaulted=np.array([r["defaulted"] == "1" for r in rows]),
    )


def write_moments_csv(path: str, moments: Dict[str, MomentVector]) -> None:
    rows = [[g] + [getattr(m, n) for n in MOMENT_NAMES] for g, m in sorted(moments.items())]
    atomic_write_text(path, rows_to_csv(["group"] + list(MOMENT_NAMES), rows))


def read_moments_csv(path: str) -> Dict[str, MomentVector]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = set(["group", *MOMENT_NAMES]) - set(reader.fieldnames or [])
        if missing:
            raise ValidationError(f"target-moment file missing columns {sorted(missing)}")
        out = {}
        for r in reader:
            out[r["group"]] = MomentVector(**{n: float(r[n]) for n in MOMENT_NAMES})
    if not out:
        raise ValidationError("empty target-moment file")
    return out


def write_cf_csv(path: str, reports: Sequence[CfReport]) -> None:
    rows = [
        [r.scenario, r.group, r.approval_rate, r.type1_rate, r.type2_rate, r.threshold_used]
        for r in sorted(reports, key=lambda r: (r.group, r.scenario))
    ]
    atomic_write_text(path, rows_to_csv(CF_COLUMNS, rows))


def write_panel_csv(path: str, cells: Sequence[PanelCell]) -> None:
    rows = [
        [c.bank, c.geo, c.time, c.group, c.exam, c.eligible, c.q, c.y, c.weight]
        for c in cells
    ]
    atomic_write_text(path, rows_to_csv(PANEL_COLUMNS, rows))


def read_panel_csv(path: str) -> List[PanelCell]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != PANEL_COLUMNS:
            raise ValidationError(f"unexpected panel header {reader.fieldnames}")
        cells = [
            PanelCell(
                bank=int(r["bank"]), geo=int(r["geo"]), time=int(r["time"]), group=r["group"],
                q=float(r["q"]), y=float(r["y"]), exam=int(r["exam"]),
                eligible=int(r["eligible"]), weight=float(r["weight"]),
            )
            for r in reader
        ]
    if not cells:
        raise ValidationError("empty panel file")
    return cells


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(out_dir: str, config: dict, seed: int) -> None:
    """Everything needed to re-run the job bit-identically; no wall-clock state."""
    import numpy
    from . import __version__

    manifest = {
        "schema_version": 1,
        "config": config,
        "config_sha256": config_hash(config),
        "seed": int(seed),
        "versions": {"screenkit": __version__, "numpy": numpy.__version__},
    }
    atomic_write_text(
        os.path.join(out_dir, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )
