#!/usr/bin/env python3
"""Verify the four showcase programs and dump their symbolic traces in the
annotated style (state per program point)."""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).parent.parent / "src"))

from latchproof import names
from latchproof.parser import SourceFile, format_state, parse_program
from latchproof.verifier import VerifyOptions, verify_program

CORPUS = pathlib.Path(__file__).parent.parent / "corpus"

SHOWCASE = ["cdl2", "race", "deadlock_intra", "deadlock_inter"]


def main():
    for name in SHOWCASE:
        path = CORPUS / f"{name}.lp"
        names.reset_fresh()
        program = parse_program(SourceFile(str(path), path.read_text()))
        print(f"=== {name} " + "=" * (60 - len(name)))
        for v in verify_program(program, VerifyOptions()):
            tag = v.kind if v.ok else f"potential {v.kind}"
            lem = f" by {v.lemma}" if v.lemma else ""
            print(f"{v.proc}: {tag}{lem}")
            if v.trace:
                for span, state in v.trace.points:
                    print(f"  {span.line:3}:{span.col:<3} {format_state(state)}")
        print()


if __name__ == "__main__":
    main()
