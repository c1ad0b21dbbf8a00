"""Command-line entry point: ``gd2fusion {synth-data,train,fuse,eval,self-test}``.

Failures print one line to stderr::

    gd2fusion: error kind=<kind> code=<exit code> message="<json-escaped text>"

Exit codes: 1 unexpected, 2 usage (argparse), 3 path, 4 config,
5 prompt spec, 6 checkpoint, 7 self-test failure, 8 image dimensions.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from ._validation import CheckpointError, DimensionError, PromptLookupError
from .degradations import make_dataset, read_dataset, write_dataset
from .inference import fuse
from .metrics import evaluate
from .network import NetworkConfig, load_metadata, load_params
from .prompts import make_provider, parse_spec
from .selftest import run_self_test
from .trainer import TrainConfig, train

EXIT_CODES = {
    "internal": 1,
    "path": 3,
    "config": 4,
    "prompt": 5,
    "checkpoint": 6,
    "selftest": 7,
    "dimension": 8,
}
SEED_ENV = "GD2_SEED"
METRIC_COLUMNS = ("image", "ag", "ei", "sd", "sf", "mi")


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.code = EXIT_CODES[kind]

    def line(self) -> str:
        return f"gd2fusion: error kind={self.kind} code={self.code} message={json.dumps(str(self))}"


# --- helpers ----------------------------------------------------------------


def _existing(path: str, what: str, directory: bool = False) -> Path:
    p = Path(path)
    ok = p.is_dir() if directory else p.is_file()
    if not ok:
        raise CliError("path", f"{what} {path} does not exist")
    return p


def _spec(text: str):
    try:
        return parse_spec(text)
    except ValueError as exc:
        raise CliError("prompt", str(exc)) from None


def _json_arg(text: str, what: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{what} is not valid JSON ({exc})") from None
    if not isinstance(value, dict):
        raise CliError("config", f"{what} must be a JSON object")
    return value


def read_png(path: Path, grayscale: bool = False) -> np.ndarray:
    """8-bit PNG -> float32 (3, H, W) in [0, 1]; ``grayscale`` replicates BT.601 luminance."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / np.float32(255)
    except OSError as exc:
        raise CliError("path", f"cannot read image {path} ({exc})") from None
    arr = np.ascontiguousarray(arr.transpose(2, 0, 1))
    if grayscale:
        y = 0.299 * arr[0] + 0.587 * arr[1] + 0.114 * arr[2]
        arr = np.repeat((np.round(y * 255) / 255).astype(np.float32)[None], 3, axis=0)
    return arr


def write_png(arr: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    u8 = np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(u8, mode="RGB").save(path, optimize=False)


def resolve_configs(args, file_cfg: dict, env=os.environ) -> tuple[NetworkConfig, TrainConfig]:
    """Merge defaults < config file < $GD2_SEED (seed only) < command-line flags."""
    unknown = set(file_cfg) - {"network", "train"}
    if unknown:
        raise CliError("config", f"unknown config sections {sorted(unknown)}; expected 'network' and 'train'")
    net_d = dict(file_cfg.get("network", {}))
    train_d = dict(file_cfg.get("train", {}))
    if env.get(SEED_ENV) not in (None, ""):
        try:
            train_d["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise CliError("config", f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    for flag in ("seed", "epochs", "max_steps", "patch", "batch", "lr"):
        value = getattr(args, flag, None)
        if value is not None:
            train_d[flag] = value
    try:
        return NetworkConfig.from_dict(net_d), TrainConfig.from_dict(train_d)
    except (TypeError, ValueError) as exc:
        raise CliError("config", str(exc)) from None


# --- commands ---------------------------------------------------------------


def cmd_synth_data(args) -> int:
    strengths = _json_arg(args.strengths, "--strengths") if args.strengths else None
    try:
        samples = make_dataset(args.refs, count=args.count, seed=args.seed, size=args.size, strengths=strengths)
    except FileNotFoundError as exc:
        raise CliError("path", str(exc)) from None
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    out = write_dataset(samples, args.out, args.split)
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def cmd_train(args) -> int:
    data = _existing(args.data, "data directory", directory=True)
    file_cfg = {}
    if args.config:
        cfg_path = _existing(args.config, "config file")
        file_cfg = _json_arg(cfg_path.read_text(encoding="utf-8"), str(cfg_path))
    net_cfg, train_cfg = resolve_configs(args, file_cfg)
    try:
        samples = read_dataset(data, args.split)
    except FileNotFoundError as exc:
        raise CliError("path", str(exc)) from None
    except (ValueError, KeyError) as exc:
        raise CliError("config", f"bad dataset in {data}: {exc}") from None
    try:
        provider = make_provider(train_cfg.provider, net_cfg.prompt_dim)
        result = train(net_cfg, train_cfg, samples, args.out, resume=args.resume, provider=provider)
    except CheckpointError as exc:
        raise CliError("checkpoint", str(exc)) from None
    except PromptLookupError as exc:
        raise CliError("prompt", str(exc)) from None
    except FileNotFoundError as exc:
        raise CliError("path", str(exc)) from None
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    last = result.history[-1]["total"] if result.history else float("nan")
    print(f"trained {len(result.history)} steps, final total loss {last:.6f}; checkpoint {result.checkpoint}")
    return 0


def cmd_fuse(args) -> int:
    ckpt = _existing(args.ckpt, "checkpoint")
    ir = read_png(_existing(args.ir, "infrared image"), grayscale=True)
    vi = read_png(_existing(args.vi, "visible image"))
    p_ir, p_vi = _spec(args.prompt_ir), _spec(args.prompt_vi)
    if p_ir.modality != "infrared" or p_vi.modality != "visible":
        raise CliError("prompt", "--prompt-ir must be an infrared spec and --prompt-vi a visible spec")
    try:
        net = load_params(ckpt)
        selection = args.provider or load_metadata(ckpt).get("provider", "stub")
        provider = make_provider(selection, net.config.prompt_dim)
        fused = fuse(net, ir, vi, p_ir, p_vi, provider)
    except CheckpointError as exc:
        raise CliError("checkpoint", str(exc)) from None
    except PromptLookupError as exc:
        raise CliError("prompt", str(exc)) from None
    except DimensionError as exc:
        raise CliError("dimension", str(exc)) from None
    except FileNotFoundError as exc:
        raise CliError("path", str(exc)) from None
    write_png(fused, Path(args.out))
    print(f"wrote {args.out}")
    return 0


def _glob(pattern: str, what: str) -> list[Path]:
    paths = sorted(Path(p) for p in glob.glob(pattern))
    if not paths:
        raise CliError("path", f"{what} pattern {pattern!r} matched no files")
    return paths


def cmd_eval(args) -> int:
    fused = _glob(args.fused, "--fused")
    if (args.ir is None) != (args.vi is None):
        raise CliError("config", "--ir and --vi must be given together")
    sources = [None] * len(fused)
    if args.ir is not None:
        irs, vis = _glob(args.ir, "--ir"), _glob(args.vi, "--vi")
        if not len(irs) == len(vis) == len(fused):
            raise CliError("config", f"glob sizes differ: fused {len(fused)}, ir {len(irs)}, vi {len(vis)}")
        sources = list(zip(irs, vis))
    rows = []
    for path, src in zip(fused, sources):
        img = read_png(path)
        if src is None:
            rep = evaluate(img)
        else:
            ir, vi = read_png(src[0], grayscale=True), read_png(src[1])
            if ir.shape != img.shape or vi.shape != img.shape:
                raise CliError("dimension", f"{path.name} and its sources differ in size")
            rep = evaluate(img, ir, vi)
        rows.append([path.name, rep.ag, rep.ei, rep.sd, rep.sf, "" if rep.mi is None else rep.mi])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow([row[0]] + [v if v == "" else repr(float(v)) for v in row[1:]])
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_self_test(args) -> int:
    results = run_self_test()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.seconds:.1f}s) {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CliError("selftest", f"failed checks: {', '.join(failed)}")
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gd2fusion", description="Prompt-guided infrared/visible image fusion.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic degraded dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--split", default="train")
    p.add_argument("--strengths", help='JSON object, e.g. \'{"noise": 0.05}\'')
    p.add_argument("--refs", help="directory of *_ir.png/*_vi.png reference pairs (default: procedural scenes)")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train a network on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON file with optional 'network' and 'train' sections")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--resume", help="epoch checkpoint to continue from")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--patch", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="fuse one infrared/visible PNG pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ir", required=True)
    p.add_argument("--vi", required=True)
    p.add_argument("--prompt-ir", required=True, dest="prompt_ir", help="e.g. infrared:noise")
    p.add_argument("--prompt-vi", required=True, dest="prompt_vi", help="e.g. visible:low_light")
    p.add_argument("--provider", help="stub or file:PATH (default: as recorded in the checkpoint)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="compute AG/EI/SD/SF (and MI with sources) for fused PNGs")
    p.add_argument("--fused", required=True, help="glob of fused images")
    p.add_argument("--ir", help="glob of infrared sources, sorted to match --fused")
    p.add_argument("--vi", help="glob of visible sources, sorted to match --fused")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("self-test", help="run the built-in invariant checks")
    p.set_defaults(func=cmd_self_test)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(exc.line(), file=sys.stderr)
        return exc.code
    except Exception as exc:  # last resort: still one parsable line
        err = CliError("internal", f"{type(exc).__name__}: {exc}")
        print(err.line(), file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
