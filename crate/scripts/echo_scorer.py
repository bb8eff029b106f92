#!/usr/bin/env python3
"""Stub scorer speaking the line-delimited JSON scorer protocol.

Rank requests get a constant score. Read requests get the first k
whitespace-separated words of the text as spans, scored 1, 1/2, 1/3, ...
Offsets are code point offsets into the request text.

Failure modes for tests: exit, silent, garbage, error, hang, die.
"""

import argparse
import json
import sys
import time


def words(text):
    spans, start = [], None
    for i, c in enumerate(text):
        if c.isspace():
            if start is not None:
                spans.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        spans.append((start, len(text)))
    return spans


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", default="ok",
                    choices=["ok", "exit", "silent", "garbage", "error", "hang", "die"])
    ap.add_argument("--score", type=float, default=0.5)
    ap.add_argument("--roles", default="rank,read")
    ap.add_argument("--pipelined", action="store_true")
    args = ap.parse_args()

    if args.mode == "exit":
        sys.stderr.write("echo scorer: exiting on request\n")
        sys.exit(3)
    if args.mode == "silent":
        time.sleep(3600)

    send({"type": "hello", "protocol": 1, "roles": args.roles.split(","),
          "pipelined": args.pipelined})

    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        if args.mode == "garbage":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        if args.mode == "error":
            send({"type": "error", "id": req["id"], "message": "stub failure"})
            continue
        if args.mode == "hang":
            time.sleep(3600)
        if args.mode == "die":
            sys.stderr.write("echo scorer: dying mid-request\n")
            sys.exit(4)
        if req["type"] == "rank":
            send({"type": "rank_result", "id": req["id"], "score": args.score})
        elif req["type"] == "read":
            spans = [{"start": s, "end": e, "score": 1.0 / (i + 1)}
                     for i, (s, e) in enumerate(words(req["text"])[: req["k"]])]
            send({"type": "read_result", "id": req["id"], "spans": spans})
        else:
            send({"type": "error", "id": req.get("id", ""), "message": "unknown request"})


if __name__ == "__main__":
    main()
