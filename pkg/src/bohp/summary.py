"""Classify trained connections as fixed/plastic, excitatory/inhibitory or inactive."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FIXED_SOFTMAX, Network, PlasticLayerParams

STRONG = 0.1  # default magnitude threshold for a "strong" w or alpha

FIXED_EXC = "fixed-excitatory"
FIXED_INH = "fixed-inhibitory"
PLASTIC_EXC = "plastic-excitatory"
PLASTIC_INH = "plastic-inhibitory"
INACTIVE = "inactive"


@dataclass(frozen=True)
class Connection:
    layer: int
    src: int
    dst: int
    w: float
    alpha: float
    cls: str

    def to_dict(self) -> dict:
        return {"layer": self.layer, "src": self.src, "dst": self.dst, "w": self.w,
                "alpha": self.alpha, "abs_w": abs(self.w), "abs_alpha": abs(self.alpha),
                "class": self.cls}


def classify(w: float, alpha: float, threshold: float = STRONG) -> str:
    """A role is strong when its magnitude reaches ``threshold``.

    When both are strong the larger magnitude wins; plastic wins exact ties.
    """
    strong_w = abs(w) >= threshold
    strong_a = abs(alpha) >= threshold
    if strong_a and (not strong_w or abs(alpha) >= abs(w)):
        return PLASTIC_EXC if alpha > 0 else PLASTIC_INH
    if strong_w:
        return FIXED_EXC if w > 0 else FIXED_INH
    return INACTIVE


def connections(net: Network, threshold: float = STRONG) -> list[Connection]:
    out = []
    for i, layer in enumerate(net.layers):
        alpha = layer.alpha if isinstance(layer, PlasticLayerParams) else np.zeros_like(layer.w)
        for dst in range(layer.n_out):
            for src in range(layer.n_in):
                w, a = float(layer.w[dst, src]), float(alpha[dst, src])
                out.append(Connection(i, src, dst, w, a, classify(w, a, threshold)))
    return out


def label_inputs(net: Network) -> int:
    """Label-suffix width: 2 for the label tasks (softmax output), else 0."""
    return 2 if net.layers[-1].kind == FIXED_SOFTMAX else 0


def summarize(net: Network, n_label_inputs: int | None = None, threshold: float = STRONG) -> dict:
    conns = connections(net, threshold)
    counts: dict = {}
    for c in conns:
        counts[c.cls] = counts.get(c.cls, 0) + 1
    report = {"threshold": threshold, "connections": [c.to_dict() for c in conns], "counts": counts}
    plastic = net.plastic
    if plastic is not None:
        n_lab = label_inputs(net) if n_label_inputs is None else n_label_inputs
        n_pat = plastic.n_in - n_lab
        if n_lab:
            report["pattern_alpha_signs"] = alpha_sign_pattern(plastic.alpha[:, :n_pat])
            pattern = [c for c in conns if c.layer == 0 and c.src < n_pat]
            report["pattern_all_plastic_inhibitory"] = all(c.cls == PLASTIC_INH for c in pattern)
        if plastic.n_in == plastic.n_out and n_lab == 0:
            report["diagonal_structure"] = diagonal_structure(net, conns)
    return report


def alpha_sign_pattern(alpha: np.ndarray) -> dict:
    return {"n_negative": int(np.sum(alpha < 0)), "n_positive": int(np.sum(alpha > 0)),
            "all_negative": bool(np.all(alpha < 0)), "signs": np.sign(alpha).astype(int).tolist()}


def diagonal_structure(net: Network, conns: list[Connection] | None = None,
                       threshold: float = STRONG) -> dict:
    """For a square plastic layer: is each input's largest fixed weight on its own output,
    and is every off-diagonal connection classified plastic?"""
    plastic = net.plastic
    conns = connections(net, threshold) if conns is None else conns
    largest_on_diag = bool(np.all(np.argmax(plastic.w, axis=0) == np.arange(plastic.n_in)))
    cross = [c for c in conns if c.layer == 0 and c.src != c.dst]
    cross_plastic = all(c.cls in (PLASTIC_EXC, PLASTIC_INH) for c in cross)
    return {"largest_fixed_on_diagonal": largest_on_diag, "cross_all_plastic": cross_plastic,
            "matches": largest_on_diag and cross_plastic}


def format_table(report: dict) -> str:
    lines = [f"{'layer':>5} {'src':>4} {'dst':>4} {'w':>9} {'alpha':>9}  class"]
    for c in report["connections"]:
        lines.append(f"{c['layer']:>5} {c['src']:>4} {c['dst']:>4} {c['w']:>9.3f} {c['alpha']:>9.3f}  {c['class']}")
    lines.append("counts: " + ", ".join(f"{k}={v}" for k, v in sorted(report["counts"].items())))
    if "pattern_alpha_signs" in report:
        s = report["pattern_alpha_signs"]
        lines.append(f"pattern->hidden alpha: {s['n_negative']} negative, {s['n_positive']} positive"
                     f" (all negative: {s['all_negative']}; all classified plastic-inhibitory:"
                     f" {report['pattern_all_plastic_inhibitory']})")
    if "diagonal_structure" in report:
        d = report["diagonal_structure"]
        lines.append(f"largest fixed weight on diagonal: {d['largest_fixed_on_diagonal']};"
                     f" cross connections all plastic: {d['cross_all_plastic']}")
    return "\n".join(lines)
