#!/usr/bin/env python3
"""Build a plain-text corpus from the docstrings of the Python standard library.

Usage: make_corpus.py OUT [--min-bytes N]
"""
import argparse
import ast
import pathlib
import sysconfig


def docstrings(path):
    try:
        tree = ast.parse(path.read_text(encoding="utf-8"))
    except (SyntaxError, UnicodeDecodeError, ValueError):
        return
    for node in ast.walk(tree):
        if isinstance(node, (ast.Module, ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
            doc = ast.get_docstring(node)
            if doc:
                yield " ".join(doc.split())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--min-bytes", type=int, default=1_200_000)
    args = ap.parse_args()

    root = pathlib.Path(sysconfig.get_paths()["stdlib"])
    written = 0
    with open(args.out, "w", encoding="utf-8") as f:
        for path in sorted(root.rglob("*.py")):
            if "test" in path.parts or "site-packages" in path.parts:
                continue
            for doc in docstrings(path):
                f.write(doc + "\n")
                written += len(doc) + 1
            if written >= args.min_bytes:
                break
    if written < args.min_bytes:
        raise SystemExit(f"only {written} bytes of text found")
    print(f"{args.out}: {written} bytes")


if __name__ == "__main__":
    main()
