#!/usr/bin/env python3
"""Reference implementation of the external oracle protocol.

Reads one JSON request per line on stdin and answers one JSON response per
line on stdout. Useful as a wiring check for PREFIXLSO_ORACLE_CMD and as a
template for adapters around real synthesis tools.

Request:  {"width": int, "bitvector": hex, "kind": "adder"|"gray",
           "input_arrivals": [float], "output_offsets": [float]}
Response: {"area": float, "delay": float}  or  {"error": str}

Modes:
  --mode constant     fixed --area/--delay for every request
  --mode node-count   area = number of present nodes, delay = width / 4
"""

import argparse
import json
import sys


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mode", choices=("constant", "node-count"), default="constant")
    parser.add_argument("--area", type=float, default=1.0)
    parser.add_argument("--delay", type=float, default=1.0)
    args = parser.parse_args()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            if args.mode == "constant":
                resp = {"area": args.area, "delay": args.delay}
            else:
                bits = bin(int(req["bitvector"], 16)).count("1")
                resp = {"area": float(bits), "delay": req["width"] / 4.0}
        except (ValueError, KeyError) as e:
            resp = {"error": f"bad request: {e}"}
        print(json.dumps(resp), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
