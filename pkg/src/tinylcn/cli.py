"""
The ``tinylcn`` command line interface.

Exit codes are 0 when everything succeeded, 1 when a check exceeded its
tolerance and 2 for usage errors and unreadable or malformed inputs. Reports
go to stdout and diagnostics to stderr, so the same seed and flags always
produce the same report (timings aside).
"""

from __future__ import annotations

__all__ = ["RunConfig", "build_parser", "run", "main"]

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from tinylcn import anchors as anchors_
from tinylcn import codec, dten, evaluation, kitti, losses, verify
from tinylcn.filters import (
    DGFilterParams,
    adaptive_weights,
    d4lcn_forward,
    dilation_histogram,
)
from tinylcn.helpers import check_odd
from tinylcn.tensor import random_tensor

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2

DEFAULT_TOLERANCES = {"eq1": 1e-12, "eq2": 1e-12, "grad": 1e-5, "vjp": 1e-10}


class UsageError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """The validated settings of one invocation

    Args:
        command: The subcommand path, e.g. ``"check eq1"``.
        seed: The random seed for randomized subcommands.
        tolerance: The pass threshold of a check.
        k: The filter window size; checks draw it at random when unset.
        d: The maximum dilation rate.
        n_f: The shift-pooling width.
        cases: The number of random cases for a check.
        paths: Input and output paths by role.
        options: Any remaining subcommand options.
    """

    command: str
    seed: Optional[int] = None
    tolerance: Optional[float] = None
    k: Optional[int] = None
    d: int = 3
    n_f: int = 2
    cases: Optional[int] = None
    paths: Mapping[str, Path] = dataclasses.field(default_factory=dict)
    options: Mapping[str, Any] = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.k is not None:
            check_odd(self.k)
        if self.d < 1:
            raise UsageError(f"'d' must be >= 1; got {self.d}")
        if self.n_f < 1:
            raise UsageError(f"'n_f' must be >= 1; got {self.n_f}")
        if self.tolerance is not None and not self.tolerance > 0:
            raise UsageError(f"Tolerances must be positive; got {self.tolerance}")
        if self.cases is not None and self.cases < 1:
            raise UsageError(f"'cases' must be positive; got {self.cases}")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise UsageError(
                f"'seed' must be an unsigned 64-bit integer; got {self.seed}"
            )

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> RunConfig:
        values = vars(ns).copy()
        command = " ".join(
            v for v in (values.pop("command", None), values.pop("action", None)) if v
        )
        values.pop("verbose", None)
        values.pop("handler", None)
        fields = {}
        for name in ("seed", "tolerance", "k", "d", "n_f", "cases"):
            if values.get(name) is not None:
                fields[name] = values.pop(name)
            else:
                values.pop(name, None)
        paths = {
            name: Path(value)
            for name, value in list(values.items())
            if isinstance(value, str) and name in _PATH_OPTIONS
        }
        for name in paths:
            values.pop(name)
        if command.startswith("check") and "tolerance" not in fields:
            fields["tolerance"] = DEFAULT_TOLERANCES[command.split()[-1]]
        return cls(command=command, paths=paths, options=values, **fields)


_PATH_OPTIONS = {
    "labels",
    "calib",
    "out",
    "out_dir",
    "tensor",
    "anchors",
    "pred",
    "target",
    "gt",
    "input",
    "guidance",
    "weights_out",
}


def _seeded(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True, help="Random seed.")


def _operator_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=3, help="Odd filter window size.")
    p.add_argument("--d", type=int, default=3, help="Maximum dilation rate.")
    p.add_argument(
        "--n-f", dest="n_f", type=int, default=2, help="Shift-pooling width."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tinylcn",
        description="Depth-guided local filtering and monocular 3D detection tools.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="More logging (-v, -vv)."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("check", help="Verify the filtering operators.")
    check_actions = check.add_subparsers(dest="action", required=True)
    for name, help_text in (
        ("eq1", "Shift-based local filtering against the per-pixel loop."),
        ("eq2", "The full operator against the loop oracle and its reductions."),
        ("grad", "The backward pass against central finite differences."),
        ("vjp", "The backward pass against automatic differentiation."),
    ):
        p = check_actions.add_parser(name, help=help_text)
        _seeded(p)
        p.add_argument(
            "--cases", type=int, default=None, help="Number of random cases."
        )
        p.add_argument("--tol", dest="tolerance", type=float, default=None)
        p.add_argument("--k", type=int, default=None, help="Fix the window size.")
        p.set_defaults(handler=_run_check)

    bench = commands.add_parser("bench", help="Time the filtering operators.")
    bench_actions = bench.add_subparsers(dest="action", required=True)
    p = bench_actions.add_parser("dgf", help="Naive against fast filtering.")
    _seeded(p)
    _operator_options(p)
    p.add_argument("--c", type=int, default=64)
    p.add_argument("--h", type=int, default=64)
    p.add_argument("--w", type=int, default=64)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.set_defaults(handler=_run_bench)

    anchors = commands.add_parser("anchors", help="Anchor templates and priors.")
    anchor_actions = anchors.add_subparsers(dest="action", required=True)
    p = anchor_actions.add_parser("fit", help="Fit 3D priors from labels.")
    p.add_argument("--labels", required=True, help="Directory of label files.")
    p.add_argument("--calib", required=True, help="Directory of calibration files.")
    p.add_argument("--out", required=True, help="Output anchors JSON.")
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--image-size", type=int, nargs=2, default=(375, 1242))
    p.add_argument("--classes", nargs="+", default=list(kitti.DEFAULT_CLASS_NAMES[1:]))
    p.set_defaults(handler=_run_anchors_fit)

    p = commands.add_parser("decode", help="Decode an output tensor to labels.")
    p.add_argument("--tensor", required=True, help="DTEN output tensor.")
    p.add_argument("--anchors", required=True, help="Anchors JSON.")
    p.add_argument("--calib", required=True, help="Calibration file.")
    p.add_argument("--out-dir", required=True, help="Directory for label files.")
    p.add_argument("--n-c", dest="n_c", type=int, default=4)
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--score-thresh", type=float, default=0.5)
    p.add_argument("--nms-thresh", type=float, default=0.4)
    p.add_argument("--refine", action="store_true", help="Hill-climb alpha.")
    p.set_defaults(handler=_run_decode)

    p = commands.add_parser("loss", help="Loss breakdown of a prediction.")
    p.add_argument("--pred", required=True, help="DTEN prediction tensor.")
    p.add_argument("--target", required=True, help="DTEN encoded target tensor.")
    p.add_argument("--anchors", default=None, help="Anchors JSON (checks n_a).")
    p.add_argument("--n-c", dest="n_c", type=int, default=4)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--corner-depth", choices=("center", "corner"), default="center")
    p.set_defaults(handler=_run_loss)

    p = commands.add_parser("eval", help="Average precision of detections.")
    p.add_argument("--gt", required=True, help="Directory of ground truth labels.")
    p.add_argument("--pred", required=True, help="Directory of detection labels.")
    p.add_argument("--classes", nargs="+", default=None)
    p.add_argument("--metrics", nargs="+", default=None, choices=("2d", "bev", "3d"))
    p.add_argument(
        "--iou-thresh", type=float, default=None, help="Override all classes."
    )
    p.add_argument("--json", action="store_true", help="Emit a JSON report.")
    p.set_defaults(handler=_run_eval)

    inspect = commands.add_parser("inspect", help="Introspection tools.")
    inspect_actions = inspect.add_subparsers(dest="action", required=True)
    p = inspect_actions.add_parser("dilation", help="Histogram of dilation weights.")
    _seeded(p)
    _operator_options(p)
    p.add_argument("--input", default=None, help="DTEN feature tensor.")
    p.add_argument("--shape", type=int, nargs=4, default=(2, 16, 32, 32))
    p.set_defaults(handler=_run_inspect_dilation)

    p = commands.add_parser("forward", help="Apply the filtering operator.")
    _seeded(p)
    _operator_options(p)
    p.add_argument("--input", required=True, help="DTEN feature tensor I.")
    p.add_argument("--guidance", required=True, help="DTEN tensor or PGM depth map.")
    p.add_argument("--out", required=True, help="Output DTEN tensor.")
    p.add_argument("--weights-out", default=None, help="Output DTEN dilation weights.")
    p.set_defaults(handler=_run_forward)
    return parser


def _run_check(config: RunConfig) -> int:
    name = config.command.split()[-1]
    runner: Callable[..., verify.CheckResult] = {
        "eq1": verify.check_eq1,
        "eq2": verify.check_eq2,
        "grad": verify.check_grad,
        "vjp": verify.check_vjp,
    }[name]
    kwargs: dict[str, Any] = {"tolerance": config.tolerance, "k": config.k}
    if config.cases is not None:
        kwargs["cases" if name in ("eq1", "eq2") else "instances"] = config.cases
    result = runner(config.seed, **kwargs)
    print(result)
    if not result.passed:
        logger.error("check %s failed", name)
        return EXIT_FAILED
    return EXIT_OK


def _run_bench(config: RunConfig) -> int:
    o = config.options
    rows = verify.benchmark(
        config.seed,
        c=o["c"],
        h=o["h"],
        w=o["w"],
        k=config.k,
        d=config.d,
        n_f=config.n_f,
        iterations=o["iterations"],
        warmup=o["warmup"],
    )
    print(
        f"shape=(1, {o['c']}, {o['h']}, {o['w']}) "
        f"k={config.k} d={config.d} n_f={config.n_f}"
    )
    for row in rows:
        print(row)
    return EXIT_OK


def _label_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise UsageError(f"Not a directory: {directory}")
    return sorted(directory.glob("*.txt"))


def _run_anchors_fit(config: RunConfig) -> int:
    classes = set(config.options["classes"])
    gts = []
    for path in _label_files(config.paths["labels"]):
        calib = kitti.read_calib(config.paths["calib"] / path.name)
        for record in kitti.read_labels(path):
            if record.type in classes:
                gts.append((kitti.to_box3d(record), calib))
    logger.info("fitting priors to %d boxes", len(gts))
    fitted = anchors_.fit_priors(
        anchors_.generate_templates(),
        gts,
        stride=config.options["stride"],
        image_size=tuple(config.options["image_size"]),
    )
    anchors_.save_anchors(config.paths["out"], fitted)
    for i, a in enumerate(fitted):
        flag = " fallback" if a.fallback else ""
        print(
            f"{i:2d} h={a.a2d[3]:8.2f} w={a.a2d[2]:8.2f} "
            f"z={a.a3d[0]:7.3f} matches={a.match_count}{flag}"
        )
    return EXIT_OK


def _run_decode(config: RunConfig) -> int:
    o = config.options
    tensor = dten.read_tensor(config.paths["tensor"])
    anchors = anchors_.load_anchors(config.paths["anchors"])
    calib = kitti.read_calib(config.paths["calib"])
    results = codec.decode_tensor(
        tensor,
        anchors,
        calib,
        n_c=o["n_c"],
        stride=o["stride"],
        score_thresh=o["score_thresh"],
        nms_thresh=o["nms_thresh"],
        refine=o["refine"],
    )
    out_dir = config.paths["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, records in enumerate(results):
        kitti.write_labels(out_dir / f"{i:06d}.txt", records)
        print(f"{i:06d}: {len(records)} detections")
    return EXIT_OK


def _vectors(tensor: np.ndarray, n_c: int) -> list[codec.OutputVector]:
    n, channels, h, w = tensor.shape
    length = 35 + n_c
    if channels % length:
        raise UsageError(f"{channels} channels is not a multiple of {length}")
    grid = tensor.reshape(n, channels // length, length, h, w)
    grid = np.moveaxis(grid, 2, -1).reshape(-1, length)
    return [codec.OutputVector.from_array(v, n_c) for v in grid]


def _run_loss(config: RunConfig) -> int:
    o = config.options
    pred = np.asarray(dten.read_tensor(config.paths["pred"]))
    target = np.asarray(dten.read_tensor(config.paths["target"]))
    if pred.shape != target.shape:
        raise UsageError(f"Shape mismatch: {pred.shape} vs {target.shape}")
    if "anchors" in config.paths:
        n_a = len(anchors_.load_anchors(config.paths["anchors"]))
        if pred.shape[1] != n_a * (35 + o["n_c"]):
            raise UsageError(f"The tensors do not hold {n_a} anchors")
    preds = _vectors(pred, o["n_c"])
    targets = [
        t if int(np.argmax(np.asarray(t.scores))) > 0 else None
        for t in _vectors(target, o["n_c"])
    ]
    breakdown = losses.batch_loss(
        preds, targets, gamma=o["gamma"], corner_depth=o["corner_depth"]
    )
    print(f"anchors={len(preds)} foreground={sum(t is not None for t in targets)}")
    for name, value in breakdown.as_dict().items():
        print(f"{name:<12s} {value:.12g}")
    return EXIT_OK


def _read_label_dir(directory: Path) -> dict[str, list[kitti.LabelRecord]]:
    return {p.stem: kitti.read_labels(p) for p in _label_files(directory)}


def _run_eval(config: RunConfig) -> int:
    o = config.options
    settings: dict[str, Any] = {}
    if o["classes"]:
        settings["classes"] = tuple(o["classes"])
    if o["metrics"]:
        settings["metrics"] = tuple(o["metrics"])
    eval_config = evaluation.EvalConfig(**settings)
    if o["iou_thresh"] is not None:
        eval_config = eval_config.with_iou_thresh(o["iou_thresh"])
    report = evaluation.evaluate(
        _read_label_dir(config.paths["gt"]),
        _read_label_dir(config.paths["pred"]),
        eval_config,
    )
    sys.stdout.write(report.to_json() + "\n" if o["json"] else report.to_text())
    return EXIT_OK


def _run_inspect_dilation(config: RunConfig) -> int:
    if "input" in config.paths:
        I = dten.read_tensor(config.paths["input"])
    else:
        I = random_tensor(config.seed, tuple(config.options["shape"]))
    params = DGFilterParams.init(
        I.shape[1], k=config.k, d=config.d, n_f=config.n_f, seed=config.seed
    )
    histogram = np.asarray(dilation_histogram(adaptive_weights(I, params)))
    for rate, share in enumerate(histogram, start=1):
        print(f"rate {rate}: {share:.6f}")
    return EXIT_OK


def _run_forward(config: RunConfig) -> int:
    I = dten.read_tensor(config.paths["input"])
    guidance = config.paths["guidance"]
    if guidance.suffix.lower() == ".pgm":
        D = kitti.depth_to_tensor(kitti.read_depth(guidance), channels=I.shape[1])
        D = np.broadcast_to(np.asarray(D), I.shape)
    else:
        D = dten.read_tensor(guidance)
    params = DGFilterParams.init(
        I.shape[1], k=config.k, d=config.d, n_f=config.n_f, seed=config.seed
    )
    out, weights = d4lcn_forward(I, D, params)
    dten.write_tensor(config.paths["out"], out)
    if "weights_out" in config.paths:
        dten.write_tensor(config.paths["weights_out"], weights.to_tensor())
    print(f"wrote {tuple(out.shape)} to {config.paths['out']}")
    return EXIT_OK


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code"""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    _configure_logging(ns.verbose)
    handler = ns.handler
    try:
        config = RunConfig.from_namespace(ns)
        return handler(config)
    except (OSError, ValueError) as e:
        print(f"tinylcn {ns.command}: {e}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
