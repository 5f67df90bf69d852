"""Dataset ingestion, analysis reports, forest plots and simulation output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence, Union
from xml.sax.saxutils import escape

import jsonschema

from .bayesian import DEFAULT_GRID_SIZE, HalfNormalPrior, bayes_analysis
from .effects import (
    OddsRatioSummary,
    StudyEstimate,
    TwoByTwo,
    estimate_from_or_ci,
    log_or_from_counts,
    or_scale,
)
from .frequentist import DL_NORMAL, HKSJ, MKH, Dataset, IntervalResult, frequentist_intervals
from .numerics import normal_quantile
from .simulation import DEFAULT_PRIORS, ScenarioResult, Scenario, run_grid

FORMATS = ("counts-csv", "or-ci-csv", "ys-csv")
HEADERS = {
    "counts-csv": ["label", "rT", "nT", "rC", "nC"],
    "or-ci-csv": ["label", "or", "lo", "hi"],
    "ys-csv": ["label", "y", "se"],
}
SCALES = ("log-OR", "OR")
DEFAULT_METHODS = (DL_NORMAL, HKSJ, MKH, "Bayes-HN(0.5)", "Bayes-HN(1.0)")
_BAYES_RE = re.compile(r"^Bayes-HN\(([0-9.eE+-]+)\)$")


class DatasetError(ValueError):
    """An input file could not be turned into a dataset."""


# ---------------------------------------------------------------------------
# ingestion


def infer_format(path: Union[str, os.PathLike]) -> str:
    name = Path(path).name
    for fmt in FORMATS:
        if name.endswith("." + fmt.replace("-csv", ".csv")):
            return fmt
    raise DatasetError(f"{path}: cannot infer the format from the file name; pass one of {FORMATS}")


def _parse_rows(lines: Sequence[str], fmt: str, source: str) -> list[StudyEstimate]:
    if fmt not in FORMATS:
        raise DatasetError(f"unknown format {fmt!r}; use one of {FORMATS}")
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not numbered:
        raise DatasetError(f"{source}: file is empty")
    header_no, header_line = numbered[0]
    header = [h.strip() for h in next(csv.reader([header_line]))]
    if header != HEADERS[fmt]:
        raise DatasetError(f"{source}:{header_no}: expected header {','.join(HEADERS[fmt])}, got {header_line.strip()}")

    studies, problems = [], []
    for lineno, line in numbered[1:]:
        cells = [c.strip() for c in next(csv.reader([line]))]
        try:
            if len(cells) != len(header):
                raise ValueError(f"expected {len(header)} fields, found {len(cells)}")
            label = cells[0]
            if fmt == "counts-csv":
                r_t, n_t, r_c, n_c = (int(c) for c in cells[1:])
                studies.append(log_or_from_counts(TwoByTwo(r_t, n_t, r_c, n_c, label)))
            elif fmt == "or-ci-csv":
                o, lo, hi = (float(c) for c in cells[1:])
                studies.append(estimate_from_or_ci(OddsRatioSummary(o, lo, hi, label=label)))
            else:
                studies.append(StudyEstimate(label, float(cells[1]), float(cells[2])))
        except ValueError as exc:
            problems.append(f"{source}:{lineno}: {exc}")
    if problems:
        raise DatasetError("\n".join(problems))
    if len(studies) < 2:
        raise DatasetError(f"{source}: need at least two study rows, found {len(studies)}")
    return studies


def parse_dataset(path: Union[str, os.PathLike], fmt: str | None = None) -> Dataset:
    """Read a dataset file; every malformed row is reported with its line number."""
    fmt = fmt or infer_format(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    return Dataset(_parse_rows(lines, fmt, str(path)))


def write_ys_csv(data: Dataset, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADERS["ys-csv"])
        for st in data:
            w.writerow([st.label, repr(st.y), repr(st.s)])


EXAMPLES = {
    "romiplostim": "romiplostim.or-ci.csv",
    "krystexxa": "krystexxa.or-ci.csv",
    "riluzole": "riluzole.counts.csv",
    "crins": "crins.counts.csv",
    "mozobil": "mozobil.counts.csv",
}


def example_path(name: str) -> Path:
    if name not in EXAMPLES:
        raise KeyError(f"no bundled example {name!r}; choose from {sorted(EXAMPLES)}")
    return Path(str(resources.files("nnhm") / "data" / EXAMPLES[name]))


def load_example(name: str) -> Dataset:
    """Bundled two-study example; the count-based ones ship empty until transcribed."""
    path = example_path(name)
    lines = path.read_text(encoding="utf-8").splitlines()
    return Dataset(_parse_rows(lines, infer_format(path), name))


# ---------------------------------------------------------------------------
# analysis


@dataclass
class AnalysisRequest:
    dataset: Union[Dataset, Sequence[TwoByTwo], Sequence[OddsRatioSummary]]
    methods: Sequence[str] = DEFAULT_METHODS
    level: float = 0.95
    scale: str = "log-OR"
    grid_size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if not self.methods:
            raise ValueError("at least one method is required")
        for m in self.methods:
            parse_method(m)
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")


def parse_method(name: str) -> float | None:
    """Prior scale for a Bayesian method name, None for a frequentist one."""
    if name in (DL_NORMAL, HKSJ, MKH):
        return None
    match = _BAYES_RE.match(name)
    if match:
        return HalfNormalPrior(float(match.group(1))).scale
    raise ValueError(f"unknown method {name!r}")


def as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    items = list(data)
    if items and all(isinstance(it, TwoByTwo) for it in items):
        return Dataset(log_or_from_counts(it) for it in items)
    if items and all(isinstance(it, OddsRatioSummary) for it in items):
        return Dataset(estimate_from_or_ci(it) for it in items)
    return Dataset(items)


@dataclass(frozen=True)
class ReportRow:
    kind: str  # "study" or "pooled"
    interval: IntervalResult
    heterogeneity: float | None = None

    @property
    def label(self) -> str:
        return self.interval.method


@dataclass
class Report:
    rows: list[ReportRow]
    level: float
    scale: str

    @property
    def study_rows(self) -> list[ReportRow]:
        return [r for r in self.rows if r.kind == "study"]

    @property
    def pooled_rows(self) -> list[ReportRow]:
        return [r for r in self.rows if r.kind == "pooled"]

    def pooled(self, method: str) -> ReportRow:
        for r in self.pooled_rows:
            if r.label == method:
                return r
        raise KeyError(method)

    def to_text(self) -> str:
        """Human-readable table with three significant figures."""
        pct = f"{100 * self.level:g}%"
        head = f"{'row':<16}{'estimate':>10}  {pct + ' interval':<24}{'tau':>8}"
        out = [f"scale: {self.scale}", head, "-" * len(head)]
        for r in self.rows:
            iv = r.interval
            het = "" if r.heterogeneity is None else _sig3(r.heterogeneity)
            ci = f"({_sig3(iv.lower)}, {_sig3(iv.upper)})"
            out.append(f"{r.label:<16}{_sig3(iv.estimate):>10}  {ci:<24}{het:>8}")
        return "\n".join(out)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "label", "estimate", "lower", "upper", "level", "scale", "tau"])
        for r in self.rows:
            iv = r.interval
            tau = "" if r.heterogeneity is None else repr(r.heterogeneity)
            w.writerow([r.kind, r.label, repr(iv.estimate), repr(iv.lower), repr(iv.upper), iv.level, self.scale, tau])
        return buf.getvalue()


def _sig3(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.3g}"


def analyze(req: AnalysisRequest) -> Report:
    """One row per study, then one pooled row per requested method."""
    data = as_dataset(req.dataset)
    z = normal_quantile(0.5 * (1 + req.level))
    rows = [
        ReportRow("study", IntervalResult(st.label, st.y, st.y - z * st.s, st.y + z * st.s, req.level))
        for st in data
    ]
    fit, freq = frequentist_intervals(data, req.level)
    for method in req.methods:
        scale = parse_method(method)
        if scale is None:
            rows.append(ReportRow("pooled", freq[method], fit.tau_hat))
        else:
            res = bayes_analysis(data, HalfNormalPrior(scale), req.level, req.grid_size)
            rows.append(ReportRow("pooled", res.interval, res.tau_median))
    if req.scale == "OR":
        rows = [ReportRow(r.kind, or_scale(r.interval), r.heterogeneity) for r in rows]
    return Report(rows, req.level, req.scale)


# ---------------------------------------------------------------------------
# forest plot


@dataclass(frozen=True)
class ForestRow:
    label: str
    estimate: float
    lower: float
    upper: float
    heterogeneity: float | None = None
    pooled: bool = False


@dataclass
class ForestPlotSpec:
    rows: list[ForestRow]
    log_scale: bool = True
    title: str = ""
    x_label: str = "odds ratio"

    def __post_init__(self):
        seen_pooled = False
        for r in self.rows:
            if seen_pooled and not r.pooled:
                raise ValueError("study rows must come before pooled rows")
            seen_pooled |= r.pooled
            if self.log_scale and r.estimate <= 0:
                raise ValueError(f"{r.label}: a log axis needs positive estimates")

    @classmethod
    def from_report(cls, report: Report, title: str = "") -> "ForestPlotSpec":
        rows = [
            ForestRow(r.label, r.interval.estimate, r.interval.lower, r.interval.upper, r.heterogeneity, r.kind == "pooled")
            for r in report.rows
        ]
        log_scale = report.scale == "OR"
        return cls(rows, log_scale, title, "odds ratio" if log_scale else "log odds ratio")


_W, _ROW_H, _TOP, _PLOT_L, _PLOT_R = 760, 24, 48, 190, 540


def _nice_ticks(lo: float, hi: float, log_scale: bool) -> list[float]:
    if log_scale:
        e_lo, e_hi = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        mantissas = (1, 2, 5) if e_hi - e_lo <= 2 else (1,)
        ticks = [m * 10.0**e for e in range(e_lo, e_hi + 1) for m in mantissas]
        return [float(f"{t:.6g}") for t in ticks if lo <= t <= hi]
    raw = (hi - lo) / 5
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step)
    return [round(i * step, 10) for i in range(first, int(math.floor(hi / step)) + 1)]


def _axis_range(spec: ForestPlotSpec) -> tuple[float, float]:
    ref = 1.0 if spec.log_scale else 0.0
    vals = [ref] + [v for r in spec.rows for v in (r.estimate, r.lower, r.upper) if math.isfinite(v)]
    if spec.log_scale:
        vals = [v for v in vals if v > 0]
        lo, hi = math.log10(min(vals)), math.log10(max(vals))
        pad = 0.05 * max(hi - lo, 0.2)
        return 10 ** (lo - pad), 10 ** (hi + pad)
    lo, hi = min(vals), max(vals)
    pad = 0.05 * max(hi - lo, 0.2)
    return lo - pad, hi + pad


def forest_svg(spec: ForestPlotSpec) -> str:
    """SVG text of a forest plot; identical input gives identical bytes."""
    lo, hi = _axis_range(spec)
    fwd = math.log10 if spec.log_scale else (lambda v: v)
    a, b = fwd(lo), fwd(hi)

    def px(v: float) -> float:
        if spec.log_scale and v <= 0:
            return _PLOT_L
        if math.isinf(v):
            return _PLOT_L if v < 0 else _PLOT_R
        x = _PLOT_L + (fwd(v) - a) / (b - a) * (_PLOT_R - _PLOT_L)
        return min(max(x, _PLOT_L), _PLOT_R)

    n = len(spec.rows)
    gap = _ROW_H // 2 if any(r.pooled for r in spec.rows) else 0
    axis_y = _TOP + n * _ROW_H + gap + 8
    height = axis_y + 48
    f = lambda v: f"{v:.2f}"  # noqa: E731
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{height}" '
        f'viewBox="0 0 {_W} {height}" font-family="Helvetica, Arial, sans-serif" font-size="12">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if spec.title:
        out.append(f'<text x="10" y="20" font-size="14" font-weight="bold">{escape(spec.title)}</text>')
    out.append(f'<text x="{_PLOT_R + 12}" y="{_TOP - 10}" font-weight="bold">estimate (interval)</text>')
    out.append(f'<text x="{_W - 10}" y="{_TOP - 10}" text-anchor="end" font-weight="bold">tau</text>')

    ref_x = px(1.0 if spec.log_scale else 0.0)
    out.append(
        f'<line class="reference" x1="{f(ref_x)}" y1="{_TOP - 4}" x2="{f(ref_x)}" y2="{axis_y}" '
        'stroke="#888" stroke-dasharray="4,3"/>'
    )
    for i, r in enumerate(spec.rows):
        y = _TOP + i * _ROW_H + _ROW_H / 2 + (gap if r.pooled else 0)
        kind = "pooled" if r.pooled else "study"
        out.append(f'<g class="row {kind}">')
        out.append(f'<text x="10" y="{f(y + 4)}">{escape(r.label)}</text>')
        x_lo, x_hi, x_est = px(r.lower), px(r.upper), px(r.estimate)
        if r.upper > r.lower:
            out.append(
                f'<line class="interval" x1="{f(x_lo)}" y1="{f(y)}" x2="{f(x_hi)}" y2="{f(y)}" '
                'stroke="black" stroke-width="1.5"/>'
            )
        if r.pooled:
            d = 6
            pts = f"{f(x_est - d)},{f(y)} {f(x_est)},{f(y - d)} {f(x_est + d)},{f(y)} {f(x_est)},{f(y + d)}"
            out.append(f'<polygon class="marker" points="{pts}" fill="#1f4e79"/>')
        else:
            out.append(f'<rect class="marker" x="{f(x_est - 4)}" y="{f(y - 4)}" width="8" height="8" fill="black"/>')
        text = f"{_sig3(r.estimate)} ({_sig3(r.lower)}, {_sig3(r.upper)})"
        out.append(f'<text x="{_PLOT_R + 12}" y="{f(y + 4)}">{escape(text)}</text>')
        if r.heterogeneity is not None:
            out.append(f'<text x="{_W - 10}" y="{f(y + 4)}" text-anchor="end">{_sig3(r.heterogeneity)}</text>')
        out.append("</g>")

    out.append(f'<line class="axis" x1="{_PLOT_L}" y1="{axis_y}" x2="{_PLOT_R}" y2="{axis_y}" stroke="black"/>')
    for t in _nice_ticks(lo, hi, spec.log_scale):
        x = px(t)
        out.append(f'<line class="tick" x1="{f(x)}" y1="{axis_y}" x2="{f(x)}" y2="{axis_y + 5}" stroke="black"/>')
        out.append(f'<text x="{f(x)}" y="{axis_y + 18}" text-anchor="middle">{t:g}</text>')
    mid = (_PLOT_L + _PLOT_R) / 2
    out.append(f'<text x="{mid}" y="{axis_y + 36}" text-anchor="middle">{escape(spec.x_label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_forest(spec: ForestPlotSpec, out: Union[str, os.PathLike]) -> Path:
    path = Path(out)
    try:
        path.write_bytes(forest_svg(spec).encode("utf-8"))
    except OSError as exc:
        raise OSError(f"could not write forest plot to {path}: {exc.strerror or exc}") from exc
    return path


# ---------------------------------------------------------------------------
# simulation driver

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["sizes", "taus", "replications", "seed"],
    "additionalProperties": False,
    "properties": {
        "sizes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "integer", "minimum": 1},
            },
        },
        "taus": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        "mu": {"type": "number"},
        "replications": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "priors": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "workers": {"type": "integer", "minimum": 1},
        "grid_size": {"type": "integer", "minimum": 2},
    },
}


class ConfigError(ValueError):
    """A simulation config failed validation."""


@dataclass
class SimulationConfig:
    sizes: list[tuple[int, int]]
    taus: list[float]
    replications: int
    seed: int
    mu: float = 0.0
    level: float = 0.95
    priors: list[float] = field(default_factory=lambda: list(DEFAULT_PRIORS))
    workers: int = 1
    grid_size: int | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "SimulationConfig":
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            raise ConfigError("\n".join(f"{e.json_path}: {e.message}" for e in errors))
        raw = dict(raw)
        raw["sizes"] = [tuple(sz) for sz in raw["sizes"]]
        return cls(**raw)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "SimulationConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def scenarios(self) -> list[Scenario]:
        extra = {} if self.grid_size is None else {"grid_size": self.grid_size}
        return [
            Scenario(
                n1, n2, float(tau), mu=self.mu, replications=self.replications, level=self.level,
                seed=self.seed, index=i, priors=tuple(self.priors), **extra,
            )
            for i, ((n1, n2), tau) in enumerate((sz, t) for sz in self.sizes for t in self.taus)
        ]


def design_grid_config() -> SimulationConfig:
    path = resources.files("nnhm") / "data" / "design-grid.json"
    return SimulationConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))


RESULT_FIELDS = ["n1", "n2", "tau", "mu", "replications", "level", "seed", "metric", "method", "value", "mc_se"]


def _write_records(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(records)


def zero_fraction_pivot(results: Sequence[ScenarioResult]) -> tuple[list[float], list[list]]:
    """Pivot of zero-fraction percentages: one row per size pair, one column per tau."""
    taus = sorted({r.scenario.tau for r in results})
    pairs: dict[tuple[int, int], dict[float, float]] = {}
    for r in results:
        pairs.setdefault((r.scenario.n1, r.scenario.n2), {})[r.scenario.tau] = 100 * r.zero_fraction
    rows = [[f"{n1}/{n2}", *(cells.get(t, math.nan) for t in taus)] for (n1, n2), cells in pairs.items()]
    return taus, rows


def write_results(results: Sequence[ScenarioResult], out_dir: Union[str, os.PathLike]) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = [rec for r in results if r.ok for rec in r.records()]
    paths = {
        "results": out / "results.csv",
        "zero_fractions": out / "zero_fractions.csv",
        "bias": out / "bias.csv",
        "coverage": out / "coverage.csv",
        "length": out / "length.csv",
    }
    _write_records(paths["results"], records)
    _write_records(paths["bias"], [r for r in records if r["metric"] == "tau_bias"])
    _write_records(paths["coverage"], [r for r in records if r["metric"] == "coverage"])
    _write_records(paths["length"], [r for r in records if r["metric"] == "mean_length"])
    taus, rows = zero_fraction_pivot([r for r in results if r.ok])
    with open(paths["zero_fractions"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n1/n2", *(repr(t) for t in taus)])
        w.writerows(rows)
    return paths


def simulate_cmd(
    config: Union[str, os.PathLike, SimulationConfig],
    out_dir: Union[str, os.PathLike],
    workers: int | None = None,
) -> list[ScenarioResult]:
    """Run a configured grid and write its CSV outputs; failed scenarios are omitted from the files."""
    cfg = config if isinstance(config, SimulationConfig) else SimulationConfig.load(config)
    results = run_grid(cfg.scenarios(), workers or cfg.workers)
    write_results(results, out_dir)
    return results
