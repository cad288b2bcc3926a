"""Reference adapter for tests: accepts an item iff its length is at most N.

Reads one tokenized input per line from stdin and answers ``ACCEPT 1 <ms>``
or ``REJECT <ms>``.  Run as ``python -m tsdb.adapters.mock N``.
"""

import argparse
import sys
import time

from tsdb.model import item_length


def main(argv=None):
    parser = argparse.ArgumentParser(prog="tsdb-mock-adapter", description=__doc__)
    parser.add_argument("max_length", type=int, help="accept inputs up to this length")
    parser.add_argument("--reject-all", action="store_true", help="reject every input")
    parser.add_argument("--unanalyzed", action="store_true",
                        help="flag rejections as unanalyzed")
    parser.add_argument("--sleep-on", metavar="TEXT",
                        help="sleep --sleep seconds before answering inputs containing TEXT")
    parser.add_argument("--sleep", type=float, default=30.0)
    parser.add_argument("--crash-on", metavar="TEXT", help="exit on inputs containing TEXT")
    parser.add_argument("--garble-on", metavar="TEXT",
                        help="answer inputs containing TEXT with a malformed line")
    args = parser.parse_args(argv)

    for line in sys.stdin:
        started = time.monotonic()
        text = line.rstrip("\n")
        if args.crash_on and args.crash_on in text:
            sys.exit(3)
        if args.sleep_on and args.sleep_on in text:
            time.sleep(args.sleep)
        if args.garble_on and args.garble_on in text:
            sys.stdout.write("MAYBE\n")
            sys.stdout.flush()
            continue
        elapsed = int((time.monotonic() - started) * 1000)
        if not args.reject_all and item_length(text) <= args.max_length:
            sys.stdout.write(f"ACCEPT 1 {elapsed}\n")
        elif args.unanalyzed:
            sys.stdout.write(f"REJECT {elapsed} unanalyzed\n")
        else:
            sys.stdout.write(f"REJECT {elapsed}\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
