"""Regenerate the bundled flow-stream Kinetics-400 name map.

Derives the container-side names from the viewflow "i3d-flow" network spec
(so the map can never drift from what the extractor binds) and pairs them
with the published checkpoint's variable names:

    Flow/inception_i3d/<layer>/conv_3d/w                kernel, TF layout
                                                        [kt, kh, kw, C, K]
    Flow/inception_i3d/<layer>/batch_norm/beta          stored broadcastable
    Flow/inception_i3d/<layer>/batch_norm/moving_mean
    Flow/inception_i3d/<layer>/batch_norm/moving_variance

Usage: python3 tools/make_default_map.py > src/vwtc_convert/maps/i3d_flow_kinetics400.json
"""
import json
import sys

from viewflow.network.model import load_network
from viewflow.network.spec import load_spec

TF_PREFIX = "Flow/inception_i3d"
KERNEL_PERMUTE = [4, 3, 0, 1, 2]  # [kt,kh,kw,C,K] -> [K,C,kt,kh,kw]
BN_SOURCE = {"beta": "beta", "mean": "moving_mean", "var": "moving_variance"}


def build_entries():
    net = load_network(load_spec("i3d-flow"), seed=0)
    entries = []
    for name in net.params:
        layer, kind, field = name.rsplit("/", 2)
        if kind == "conv" and field == "kernel":
            entries.append({
                "source": f"{TF_PREFIX}/{layer}/conv_3d/w",
                "target": name,
                "permute": KERNEL_PERMUTE,
            })
        elif kind == "conv" and field == "bias":
            entries.append({
                "source": f"{TF_PREFIX}/{layer}/conv_3d/b",
                "target": name,
            })
        elif kind == "bn":
            entries.append({
                "source": f"{TF_PREFIX}/{layer}/batch_norm/{BN_SOURCE[field]}",
                "target": name,
                "squeeze": True,
            })
        else:
            raise SystemExit(f"unexpected parameter name: {name}")
    return sorted(entries, key=lambda e: e["target"])


if __name__ == "__main__":
    json.dump({"version": 1, "entries": build_entries()}, sys.stdout, indent=2)
    sys.stdout.write("\n")
