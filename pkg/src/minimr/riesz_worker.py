"""Streaming mapper for the texture job: ``python3 -m minimr.riesz_worker``.

Reads volume-path records on stdin, writes ``volume_id \\t energies`` records
on stdout, logs skipped volumes to stderr, exits 0. This is the packaged
external executable exercising the engine's streaming deployment path.
"""

from __future__ import annotations

import argparse
import sys

from .errors import InputError
from .records import Record, decode_record, encode_record
from .riesz import analyze_volume, read_volume, volume_id_for, _energies_csv


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="minimr.riesz_worker")
    parser.add_argument("--scales", type=int, default=4)
    parser.add_argument("--order", type=int, default=4)
    parser.add_argument("--no-normalize", action="store_true")
    args = parser.parse_args(argv)

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    for line in stdin:
        record = decode_record(line)
        path = record.key.decode()
        try:
            voxels = read_volume(path)
            features = analyze_volume(
                voxels, args.scales, args.order,
                volume_id=volume_id_for(path), normalize=not args.no_normalize,
            )
        except InputError as exc:
            sys.stderr.write("skip %s: %s\n" % (path, exc))
            continue
        out = encode_record(Record(features.volume_id.encode(), _energies_csv(features.energies)))
        stdout.write(out + b"\n")
    stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
