"""Command-line entry point.

Subcommands: gen-data, fpg, train, eval, synth, serve. Every run prints the
resolved seed; all randomness flows from --seed. Exit codes: 0 success,
1 validation error (bad flags or values), 2 runtime failure. Errors are
printed to stderr with an `error:` prefix.

A flat key=value config file can be layered under the flags with --config;
explicit flags win. Keys use the long option spelling without the leading
dashes (e.g. ``epochs-fixed=4``).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .errors import TlpError
from .fpg import PromptConfig, generate_prompt
from .io import atomic_write, read_pgm, write_pgm, write_tlpt, encode_gray_png
from .metrics import evaluate_split, resolve_prompt, synthesize_case
from .model import GeneratorConfig, load_checkpoint
from .phantom import PhantomSpec, generate_dataset, load_split, read_case, read_manifest
from .train import TrainConfig, train


class CliValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliValidationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="tlp",
        description="Prompt-guided multi-contrast MRI synthesis on procedural phantoms.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"tlp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-data", help="generate a phantom dataset", formatter_class=fmt)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--cases", type=int, default=200, help="number of cases")
    p.add_argument("--resolution", type=int, default=64, help="image height and width")
    p.add_argument("--train-frac", type=float, default=0.85, help="training split fraction")
    p.add_argument("--val-frac", type=float, default=0.02, help="validation split fraction")
    p.add_argument("--test-frac", type=float, default=0.13, help="test split fraction")
    p.add_argument("--noise-std", type=float, default=0.02, help="additive Gaussian noise std")
    p.add_argument("--gain", type=float, default=0.5, help="lesion enhancement gain in the target")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--config", default=None, help="key=value config file layered under flags")

    p = sub.add_parser("fpg", help="perturb a mask with fuzzy prompt generation", formatter_class=fmt)
    p.add_argument("--mask", required=True, help="input PGM mask")
    p.add_argument("--out", required=True, help="output PGM mask")
    p.add_argument("--q", type=float, default=0.5, help="prompt drop probability")
    p.add_argument("--p", type=float, default=0.9, help="dilation probability")
    p.add_argument("--t", type=int, default=5, help="scaling iterations")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--config", default=None, help="key=value config file layered under flags")

    p = sub.add_parser("train", help="train a model on a phantom dataset", formatter_class=fmt)
    p.add_argument("--data", required=True, help="dataset directory (from gen-data)")
    p.add_argument("--out", required=True, help="run directory for logs and checkpoints")
    p.add_argument("--lr", type=float, default=1e-4, help="initial learning rate")
    p.add_argument("--beta1", type=float, default=0.5, help="Adam beta1")
    p.add_argument("--beta2", type=float, default=0.999, help="Adam beta2")
    p.add_argument("--lambda", dest="lambda_pix", type=float, default=100.0,
                   help="pixel L1 weight in the generator objective")
    p.add_argument("--epochs-fixed", type=int, default=8, help="epochs at fixed lr")
    p.add_argument("--epochs-decay", type=int, default=8, help="epochs of linear lr decay to zero")
    p.add_argument("--batch-size", type=int, default=4, help="cases per batch")
    p.add_argument("--fpg-q", type=float, default=0.5, help="prompt drop probability during training")
    p.add_argument("--fpg-p", type=float, default=0.9, help="prompt dilation probability")
    p.add_argument("--fpg-t", type=int, default=5, help="prompt scaling iterations")
    p.add_argument("--independent-prompts", action="store_true",
                   help="perturb each branch's prompt independently (default: shared)")
    p.add_argument("--base-channels", type=int, default=16, help="generator width at full resolution")
    p.add_argument("--levels", type=int, default=2, help="downsampling stages")
    p.add_argument("--single-input", action="store_true", help="use only the first input contrast")
    p.add_argument("--checkpoint-every", type=int, default=0, help="epochs between checkpoints (0: final only)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--config", default=None, help="key=value config file layered under flags")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split", formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="generator checkpoint (.tlpckpt)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", default="test", choices=("train", "val", "test"), help="dataset split")
    p.add_argument("--prompt", default="none",
                   help="prompt mode: none, lesion (oracle mask), or file:<mask.pgm>")
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.add_argument("--seed", type=int, default=0, help="master seed (evaluation is deterministic)")
    p.add_argument("--config", default=None, help="key=value config file layered under flags")

    p = sub.add_parser("synth", help="synthesize the target contrast for one case", formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="generator checkpoint (.tlpckpt)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--case", required=True, help="case id")
    p.add_argument("--prompt", default="none",
                   help="prompt mode: none, lesion (oracle mask), or a PGM mask path")
    p.add_argument("--out", required=True, help="output TLPT image path")
    p.add_argument("--png", default=None, help="optional 8-bit PNG preview path")
    p.add_argument("--seed", type=int, default=0, help="master seed (synthesis is deterministic)")
    p.add_argument("--config", default=None, help="key=value config file layered under flags")

    p = sub.add_parser("serve", help="serve case browsing and synthesis over HTTP", formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="generator checkpoint (.tlpckpt)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8700, help="listen port")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--config", default=None, help="key=value config file layered under flags")

    return parser


def _layer_config_file(parser: _Parser, argv: list[str]) -> list[str]:
    """Read --config key=value lines and inject them as subcommand defaults."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise CliValidationError("--config needs a file path")
    path = argv[at + 1]
    if not os.path.exists(path):
        raise CliValidationError(f"config file {path} does not exist")
    extra: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            flag = f"--{key}"
            if value.lower() in ("true", "yes", "on") and key in ("single-input", "independent-prompts"):
                extra.append(flag)
            else:
                extra.extend([flag, value])
    # config entries go before the explicit argv flags so explicit flags win
    # (argparse keeps the last occurrence of a repeated option)
    command, rest = argv[0], argv[1:]
    return [command] + extra + rest


def _cmd_gen_data(args) -> int:
    print(f"seed: {args.seed}")
    spec = PhantomSpec(resolution=args.resolution, noise_std=args.noise_std,
                       enhancement_gain=args.gain, seed=args.seed)
    fractions = (args.train_frac, args.val_frac, args.test_frac)
    manifest = generate_dataset(spec, args.cases, args.out, fractions)
    counts = {}
    for case in manifest["cases"]:
        counts[case["split"]] = counts.get(case["split"], 0) + 1
    print(f"wrote {len(manifest['cases'])} cases to {args.out} "
          f"(train={counts.get('train', 0)}, val={counts.get('val', 0)}, test={counts.get('test', 0)})")
    return 0


def _cmd_fpg(args) -> int:
    print(f"seed: {args.seed}")
    mask = read_pgm(args.mask)
    cfg = PromptConfig(p=args.p, q=args.q, t=args.t, seed=args.seed)
    write_pgm(args.out, generate_prompt(mask, cfg))
    print(f"wrote {args.out}")
    return 0


def _cmd_train(args) -> int:
    print(f"seed: {args.seed}")
    cfg = TrainConfig(
        lr0=args.lr, beta1=args.beta1, beta2=args.beta2, lambda_pix=args.lambda_pix,
        epochs_fixed=args.epochs_fixed, epochs_decay=args.epochs_decay,
        batch_size=args.batch_size, fpg_q=args.fpg_q, fpg_p=args.fpg_p, fpg_t=args.fpg_t,
        shared_prompt=not args.independent_prompts, seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )
    gen_cfg = GeneratorConfig(base_channels=args.base_channels, levels=args.levels,
                              single_input=args.single_input)
    train_cases = load_split(args.data, "train")
    val_cases = load_split(args.data, "val")

    def progress(report):
        val = report.get("val_psnr")
        val_s = f" val_psnr={val:.2f}" if val is not None else ""
        print(f"epoch {report['epoch']:3d}  lr={report['lr']:.2e}  g={report['g_loss']:.3f}  "
              f"d={report['d_loss']:.3f}  l1={report['l1']:.4f}{val_s}  ({report['seconds']:.1f}s)")

    train(train_cases, val_cases, args.out, cfg, gen_cfg, progress=progress)
    print(f"final checkpoint: {os.path.join(args.out, 'ckpt_final.tlpckpt')}")
    return 0


def _cmd_eval(args) -> int:
    print(f"seed: {args.seed}")
    report = evaluate_split(args.ckpt, args.data, split=args.split, prompt_mode=args.prompt)
    print(report.to_table(label=f"{args.split}/{args.prompt}"))
    if args.out:
        atomic_write(args.out, lambda fh: fh.write(report.to_json().encode("utf-8")))
        print(f"wrote {args.out}")
    return 0


def _cmd_synth(args) -> int:
    print(f"seed: {args.seed}")
    gen = load_checkpoint(args.ckpt)
    manifest = read_manifest(args.data)
    known = {c["id"] for c in manifest["cases"]}
    if args.case not in known:
        raise CliValidationError(f"unknown case {args.case!r}")
    case = read_case(os.path.join(args.data, args.case))
    mode = args.prompt
    if mode not in ("none", "lesion", "oracle-lesion") and not mode.startswith("file:"):
        mode = f"file:{mode}"  # bare path shorthand
    prompt = resolve_prompt(mode, case, case.x1.shape)
    y_hat = synthesize_case(gen, case, prompt)
    write_tlpt(args.out, y_hat)
    print(f"wrote {args.out}")
    if args.png:
        quantized = np.clip((y_hat + 1.0) / 2.0 * 255.0, 0, 255).round().astype(np.uint8)
        atomic_write(args.png, lambda fh: fh.write(encode_gray_png(quantized)))
        print(f"wrote {args.png}")
    return 0


def _cmd_serve(args) -> int:
    from .service import InferenceService  # deferred: not needed elsewhere

    print(f"seed: {args.seed}")
    service = InferenceService(args.data, ckpt_path=args.ckpt)
    server = service.make_server(args.host, args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "fpg": _cmd_fpg,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
    "serve": _cmd_serve,
}


def run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        argv = _layer_config_file(parser, list(argv))
        args = parser.parse_args(argv)
    except CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TlpError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
