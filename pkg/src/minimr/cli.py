"""Command-line entry point: job submission, generators, benchmark harness.

Subcommands: ``wordcount``, ``gridsvm``, ``bovw`` (vocab/index), ``riesz3d``,
``bench``, ``gen``. The workspace defaults to $MR_WORKSPACE, then
``./mr-workspace``. An optional ``--config`` file of ``key=value`` lines
supplies defaults that explicit flags override. Every subcommand exits 0 on
success and nonzero with a one-line diagnostic on failure.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys

import numpy as np

from . import bench as bench_mod
from . import bovw as bovw_mod
from . import datagen
from . import riesz as riesz_mod
from . import svm as svm_mod
from . import wordcount as wc_mod
from .errors import InputError, MiniMrError
from .records import read_manifest
from .streaming import StreamingTaskSpec

DEFAULT_C_VALUES = [10.0**e for e in range(-2, 4)]  # 1e-2 .. 1e3
DEFAULT_SIGMA_VALUES = [10.0**e for e in range(-1, 3)]  # 1e-1 .. 1e2


def _load_config(argv: list[str]) -> dict[str, str]:
    if "--config" not in argv:
        return {}
    path = argv[argv.index("--config") + 1]
    config = {}
    try:
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#") or "=" not in line:
                    continue
                key, value = line.split("=", 1)
                config[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise InputError("cannot read config %s: %s" % (path, exc)) from exc
    return config


def _resolve_workspace(args) -> str:
    if args.workspace:
        return args.workspace
    return os.environ.get("MR_WORKSPACE", os.path.join(os.getcwd(), "mr-workspace"))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--workspace", help="job workspace directory (default $MR_WORKSPACE)")
    parser.add_argument("--map-slots", type=int, default=1, help="concurrent task slots")
    parser.add_argument("--config", help="key=value config file, overridden by flags")
    parser.add_argument("--seed", type=int, default=0, help="seed for any randomness")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimr", description="single-host MapReduce engine with built-in workloads"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("wordcount", help="count words in text input")
    _add_common(p)
    p.add_argument("--input", required=True, help="text file or directory of text files")
    p.add_argument("--output", required=True, help="counts file (word \\t count, sorted)")
    p.add_argument("--num-reducers", type=int, default=1)
    p.add_argument("--split-size", type=int, default=2000, help="input lines per map task")
    p.add_argument("--job-id", default="wordcount")
    p.add_argument("--streaming-mapper", help="external mapper command (shell-style string)")
    p.add_argument("--streaming-reducer", help="external reducer command (shell-style string)")

    p = sub.add_parser("gridsvm", help="(C, sigma) grid search with LOPO CV")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--grid", required=True, help="grid file, one 'C\\tsigma' per line")
    p.add_argument("--output", required=True, help="result file sorted by (C, sigma)")
    p.add_argument("--kill-factor", type=float, help="terminate couples slower than F * t_ref")
    p.add_argument("--min-reference-count", type=int, default=1)
    p.add_argument("--gen-grid", action="store_true",
                   help="write --grid from --c-values/--sigma-values before running")
    p.add_argument("--c-values", help="comma list of C values (with --gen-grid)")
    p.add_argument("--sigma-values", help="comma list of sigma values (with --gen-grid)")
    p.add_argument("--job-id", default="gridsvm")

    p = sub.add_parser("bovw", help="bag-of-visual-words indexing")
    bovw_sub = p.add_subparsers(dest="bovw_command", required=True)
    pv = bovw_sub.add_parser("vocab", help="build a visual vocabulary with k-means")
    _add_common(pv)
    pv.add_argument("--manifest", required=True, help="one image path per line")
    pv.add_argument("--k", type=int, default=500)
    pv.add_argument("--output", required=True, help="vocabulary file")
    pv.add_argument("--sample-size", type=int, default=100000,
                    help="max descriptors sampled for clustering")
    pi = bovw_sub.add_parser("index", help="index images against a vocabulary")
    _add_common(pi)
    pi.add_argument("--manifest", required=True)
    pi.add_argument("--vocab", required=True)
    pi.add_argument("--mode", choices=["monolithic", "component"], default="monolithic")
    pi.add_argument("--output", required=True, help="index file")
    pi.add_argument("--split-size", type=int, default=50, help="images per map task")
    pi.add_argument("--job-id", default="bovw")

    p = sub.add_parser("riesz3d", help="3-D Riesz texture features for volumes")
    _add_common(p)
    p.add_argument("--manifest", required=True, help="one volume path per line")
    p.add_argument("--output", required=True, help="features file")
    p.add_argument("--scales", type=int, default=4)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--group-size", type=int, default=10, help="volumes per map task")
    p.add_argument("--streaming-exec", help="external mapper command (shell-style string)")
    p.add_argument("--job-id", default="riesz3d")

    p = sub.add_parser("bench", help="run a workload across slot counts")
    _add_common(p)
    p.add_argument("--workload", choices=["wordcount", "riesz3d", "bovw"], required=True)
    p.add_argument("--slots", default="1,4", help="comma list of slot counts")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--report", required=True, help="report file")
    p.add_argument("--input", help="wordcount input")
    p.add_argument("--manifest", help="riesz3d/bovw manifest")
    p.add_argument("--vocab", help="bovw vocabulary")
    p.add_argument("--scales", type=int, default=4)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--group-size", type=int, default=1)
    p.add_argument("--split-size", type=int, default=50)

    p = sub.add_parser("gen", help="generate synthetic datasets")
    _add_common(p)
    p.add_argument("kind", choices=["svm", "images", "volumes", "corpus"])
    p.add_argument("--out", required=True, help="output file (svm) or directory")
    p.add_argument("--patients", type=int, default=10)
    p.add_argument("--per-patient", type=int, default=20)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--size", type=int, default=64, help="image side length")
    p.add_argument("--dims", type=int, default=32, help="volume side length")
    p.add_argument("--size-mb", type=float, default=1.0)
    p.add_argument("--files", type=int, default=4)
    return parser


def _streaming_spec(command: str | None, role: str) -> StreamingTaskSpec | None:
    if not command:
        return None
    return StreamingTaskSpec(argv=tuple(shlex.split(command)), role=role)


def _cmd_wordcount(args) -> int:
    workspace = _resolve_workspace(args)
    wc_mod.run_wordcount(
        args.input, args.output, workspace,
        map_slots=args.map_slots, num_reducers=args.num_reducers,
        split_size=args.split_size, job_id=args.job_id,
        streaming_mapper=_streaming_spec(args.streaming_mapper, "mapper"),
        streaming_reducer=_streaming_spec(args.streaming_reducer, "reducer"),
    )
    print("wordcount: wrote %s" % args.output)
    return 0


def _cmd_gridsvm(args) -> int:
    workspace = _resolve_workspace(args)
    if args.gen_grid:
        spec = svm_mod.GridSpec(
            c_values=([float(v) for v in args.c_values.split(",")]
                      if args.c_values else DEFAULT_C_VALUES),
            sigma_values=([float(v) for v in args.sigma_values.split(",")]
                          if args.sigma_values else DEFAULT_SIGMA_VALUES),
            dataset_path=args.data,
            kill_factor=args.kill_factor,
        )
        n = spec.write_grid_file(args.grid)
        print("gridsvm: wrote %d couples to %s" % (n, args.grid))
    couples, best, _ = svm_mod.grid_job(
        args.grid, args.data, workspace, args.output,
        map_slots=args.map_slots, kill_factor=args.kill_factor,
        min_reference_count=args.min_reference_count, job_id=args.job_id,
    )
    killed = sum(1 for c in couples if c.accuracy < 0)
    print("gridsvm: %d couples, %d killed -> %s" % (len(couples), killed, args.output))
    if best:
        print("gridsvm: best C=%g sigma=%g accuracy=%.4f" % (best.C, best.sigma, best.accuracy))
    return 0


def _sample_descriptors(manifest: str, cap: int, seed: int) -> np.ndarray:
    paths = [r.key.decode() for r in read_manifest(manifest)]
    if not paths:
        raise InputError("empty image manifest: %s" % manifest)
    pools = []
    for path in paths:
        _, vecs = bovw_mod.dense_descriptors(bovw_mod.read_pgm(path))
        if len(vecs):
            pools.append(vecs)
    sample = np.concatenate(pools)
    if len(sample) > cap:
        rng = np.random.default_rng(seed)
        sample = sample[rng.choice(len(sample), size=cap, replace=False)]
    return sample


def _cmd_bovw(args) -> int:
    workspace = _resolve_workspace(args)
    if args.bovw_command == "vocab":
        sample = _sample_descriptors(args.manifest, args.sample_size, args.seed)
        vocab = bovw_mod.build_vocabulary(sample, args.k, args.seed)
        bovw_mod.save_vocabulary(vocab, args.output)
        print("bovw vocab: k=%d from %d descriptors -> %s"
              % (vocab.k, len(sample), args.output))
        return 0
    vocab = bovw_mod.load_vocabulary(args.vocab)
    bovw_mod.build_index(
        args.manifest, vocab, args.output, workspace,
        mode=args.mode, map_slots=args.map_slots,
        split_size=args.split_size, job_id=args.job_id,
    )
    print("bovw index (%s): wrote %s" % (args.mode, args.output))
    return 0


def _cmd_riesz3d(args) -> int:
    workspace = _resolve_workspace(args)
    streaming = shlex.split(args.streaming_exec) if args.streaming_exec else None
    riesz_mod.texture_job(
        args.manifest, args.output, workspace,
        scales=args.scales, order=args.order, group_size=args.group_size,
        map_slots=args.map_slots, job_id=args.job_id, streaming_exec=streaming,
    )
    print("riesz3d: wrote %s" % args.output)
    return 0


def _cmd_bench(args) -> int:
    workspace = _resolve_workspace(args)
    slot_list = [int(s) for s in args.slots.split(",")]

    if args.workload == "wordcount":
        if not args.input:
            raise InputError("bench wordcount needs --input")

        def runner(slots: int, rep: int):
            job_id = "bench-wc-%d-%d" % (slots, rep)
            out = os.path.join(workspace, job_id + ".counts")
            result = wc_mod.run_wordcount(
                args.input, out, workspace, map_slots=slots, job_id=job_id,
                split_size=args.split_size,
            )
            return result.event_log

    elif args.workload == "riesz3d":
        if not args.manifest:
            raise InputError("bench riesz3d needs --manifest")

        def runner(slots: int, rep: int):
            job_id = "bench-riesz-%d-%d" % (slots, rep)
            out = os.path.join(workspace, job_id + ".features")
            result = riesz_mod.texture_job(
                args.manifest, out, workspace, scales=args.scales, order=args.order,
                group_size=args.group_size, map_slots=slots, job_id=job_id,
            )
            return result.event_log

    else:  # bovw (monolithic)
        if not (args.manifest and args.vocab):
            raise InputError("bench bovw needs --manifest and --vocab")
        vocab = bovw_mod.load_vocabulary(args.vocab)

        def runner(slots: int, rep: int):
            job_id = "bench-bovw-%d-%d" % (slots, rep)
            out = os.path.join(workspace, job_id + ".index")
            bovw_mod.build_index(
                args.manifest, vocab, out, workspace, mode="monolithic",
                map_slots=slots, split_size=args.split_size, job_id=job_id,
            )
            return os.path.join(workspace, job_id, "events.log")

    bench_mod.run_bench(args.workload, runner, slot_list, args.reps, args.report)
    print("bench: wrote %s" % args.report)
    return 0


def _cmd_gen(args) -> int:
    if args.kind == "svm":
        datagen.gen_svm_dataset(
            args.out, patients=args.patients, per_patient=args.per_patient,
            classes=args.classes, dim=args.dim, seed=args.seed,
        )
        print("gen svm: wrote %s" % args.out)
    elif args.kind == "images":
        manifest = datagen.gen_images(args.out, count=args.count, size=args.size, seed=args.seed)
        print("gen images: wrote %d images, manifest %s" % (args.count, manifest))
    elif args.kind == "volumes":
        manifest = datagen.gen_volumes(args.out, count=args.count, dims=args.dims, seed=args.seed)
        print("gen volumes: wrote %d volumes, manifest %s" % (args.count, manifest))
    else:
        paths = datagen.gen_corpus(args.out, size_mb=args.size_mb, seed=args.seed, files=args.files)
        print("gen corpus: wrote %d files under %s" % (len(paths), args.out))
    return 0


_COMMANDS = {
    "wordcount": _cmd_wordcount,
    "gridsvm": _cmd_gridsvm,
    "bovw": _cmd_bovw,
    "riesz3d": _cmd_riesz3d,
    "bench": _cmd_bench,
    "gen": _cmd_gen,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config = _load_config(argv)
        args = parser.parse_args(argv)
        for key, value in config.items():
            if hasattr(args, key) and key not in _explicit_flags(argv):
                current = getattr(args, key)
                if isinstance(current, int):
                    value = int(value)
                elif isinstance(current, float):
                    value = float(value)
                setattr(args, key, value)
        return _COMMANDS[args.command](args)
    except (MiniMrError, OSError) as exc:
        print("minimr: error: %s" % exc, file=sys.stderr)
        return 1


def _explicit_flags(argv: list[str]) -> set[str]:
    flags = set()
    for token in argv:
        if token.startswith("--"):
            flags.add(token[2:].split("=")[0].replace("-", "_"))
    return flags


if __name__ == "__main__":
    sys.exit(main())
