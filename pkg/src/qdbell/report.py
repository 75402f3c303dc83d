"""Flat ``key = value`` reports and comma-separated tables."""

from __future__ import annotations

import io
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .correlator import BellResult, ChshResult, Measured


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def format_report(items: Mapping[str, object]) -> str:
    lines = []
    for k, v in items.items():
        if isinstance(v, Measured):
            lines.append(f"{k} = {_fmt(v.value)}")
            lines.append(f"{k}_err = {_fmt(v.error)}")
        else:
            lines.append(f"{k} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if "=" in line and not line.lstrip().startswith("#"):
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def format_table(rows: Iterable[Mapping[str, object]]) -> str:
    frame = pd.DataFrame(list(rows))
    buf = io.StringIO()
    frame.to_csv(buf, index=False, float_format="%.6f", lineterminator="\n")
    return buf.getvalue()


def bell_items(res: BellResult, prefix: str = "") -> dict:
    items = {
        f"{prefix}C_rect": res.C_rect, f"{prefix}C_diag": res.C_diag,
        f"{prefix}C_circ": res.C_circ, f"{prefix}fidelity": res.fidelity,
        f"{prefix}S_RC": res.S_RC, f"{prefix}S_DC": res.S_DC, f"{prefix}S_RD": res.S_RD,
    }
    for name, nsig in res.violations().items():
        items[f"{prefix}{name}_sigma_above_2"] = float(nsig)
    return items


def bell_rows(res: BellResult, label: str) -> list[dict]:
    rows = []
    for name in ("C_rect", "C_diag", "C_circ", "fidelity", "S_RC", "S_DC", "S_RD"):
        m = getattr(res, name)
        rows.append({"analysis": label, "quantity": name, "value": m.value, "error": m.error})
    return rows


def chsh_items(res: ChshResult, prefix: str = "") -> dict:
    items = {}
    for lab, e in zip(res.labels, res.E):
        items[f"{prefix}E[{lab}]"] = e
    items[f"{prefix}S_CHSH"] = res.S
    items[f"{prefix}sign_convention"] = res.convention
    return items


def chsh_rows(res: ChshResult, label: str) -> list[dict]:
    rows = [{"analysis": label, "setting": lab, "sign": s, "E": e.value, "error": e.error}
            for lab, s, e in zip(res.labels, res.signs, res.E)]
    rows.append({"analysis": label, "setting": "S_CHSH", "sign": 0,
                 "E": res.S.value, "error": res.S.error})
    return rows
