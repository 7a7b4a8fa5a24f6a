"""vwtc command line: convert checkpoints, verify containers.

    vwtc convert --checkpoint flow.ckpt --out flow.vwtc
    vwtc convert --checkpoint flow.npz --map custom_map.json --out flow.vwtc
    vwtc verify flow.vwtc

Exit codes: 0 success, 1 conversion or verification failure, 2 bad usage.
"""
import argparse
import sys

from .container import IntegrityError
from .convert import SourceError, convert, verify
from .namemap import MapError, default_map_path, load_name_map
from .readers import CheckpointError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vwtc", description="Convert and verify VWTC weight containers."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convert", help="convert a checkpoint to a container")
    conv.add_argument("--checkpoint", required=True,
                      help="source checkpoint (.npz, .pt/.pth, or TF prefix)")
    conv.add_argument("--map", dest="map_path", default=None,
                      help="name map JSON (default: bundled flow-stream Kinetics-400 map)")
    conv.add_argument("--out", required=True, help="output .vwtc path")

    ver = sub.add_parser("verify", help="validate a container file")
    ver.add_argument("container", help=".vwtc file to check")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convert":
            map_path = args.map_path if args.map_path else default_map_path()
            entries = load_name_map(map_path)
            manifest = convert(args.checkpoint, entries, args.out)
            for item in manifest:
                shape = "x".join(str(d) for d in item.shape) or "scalar"
                print(f"{item.source} -> {item.target}  [{shape}]")
            print(f"converted {len(manifest)} tensors -> {args.out}")
        else:
            count = verify(args.container)
            print(f"OK, {count} tensors")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MapError, CheckpointError, SourceError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
