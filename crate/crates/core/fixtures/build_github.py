#!/usr/bin/env python3
"""Writes recorded GitHub REST replies for the fixture repositories.

Layout mirrors request paths: /repos/acme/widget/contents/src/a.c?ref=main
is stored as github/repos/acme/widget/contents/src/a.c@ref=main.json.
Re-run after editing the sources in metrics/src.
"""
import base64
import json
import os
import shutil

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "github")
METRICS_SRC = os.path.join(HERE, "metrics", "src")

WIDGET_README = """# widget

A small collection of data-structure helpers in several languages.

## Layout

- `src/` holds the library sources.
- `gen/` holds generated modules used by the test harness.
- `docs/` has design notes.

## Building

Run `make` in the repository root.
"""

MAIN_C = """#include <stdio.h>

int add(int a, int b) {
    return a + b;
}

int main(void) {
    int total = 0;
    for (int i = 0; i < 10; i++) {
        if (i % 2 == 0 && i > 2) {
            total = add(total, i);
        }
    }
    printf("%d\\n", total);
    return 0;
}
"""

TINY = {
    "Makefile": "all:\n\tcc -o hello main.c\n",
    "main.c": "#include \"util.h\"\n\nint main(void) {\n    return twice(2) - 4;\n}\n",
    "util.h": "static inline int twice(int x) { return 2 * x; }\n",
}


def gen_module(i):
    return (
        f"def step_{i:02d}(x):\n"
        f"    if x > {i}:\n"
        f"        return x - {i}\n"
        f"    return x + {i}\n"
    )


def widget_files():
    files = {
        "README.md": WIDGET_README,
        "Makefile": "all:\n\tcc -o widget src/main.c\n",
        "docs/design.txt": "Helpers are independent; no shared state.\n",
        "src/main.c": MAIN_C,
    }
    for name in sorted(os.listdir(METRICS_SRC)):
        with open(os.path.join(METRICS_SRC, name), encoding="utf-8", newline="") as f:
            files["src/" + name] = f.read()
    for i in range(32):
        files[f"gen/f{i:02d}.py"] = gen_module(i)
    return files


def write(rel, payload):
    path = os.path.join(OUT, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def b64(data):
    raw = base64.b64encode(data).decode()
    # The provider wraps base64 at 60 columns.
    return "\n".join(raw[i:i + 60] for i in range(0, len(raw), 60)) + "\n"


def content_reply(path, data):
    return {
        "type": "file",
        "name": path.rsplit("/", 1)[-1],
        "path": path,
        "size": len(data),
        "encoding": "base64",
        "content": b64(data),
    }


def tree_entries(paths):
    dirs = set()
    for p in paths:
        parts = p.split("/")
        for k in range(1, len(parts)):
            dirs.add("/".join(parts[:k]))
    entries = [{"path": d, "type": "tree"} for d in dirs]
    entries += [{"path": p, "type": "blob"} for p in paths]
    # The provider returns entries in its own order; keep it unsorted here.
    return sorted(entries, key=lambda e: (e["path"].count("/"), e["path"]), reverse=True)


def record_repo(owner, name, files, readme=None, topics=(), extra=None):
    base = f"repos/{owner}/{name}"
    write(base + ".json", {
        "full_name": f"{owner}/{name}",
        "name": name,
        "description": f"Fixture repository {owner}/{name}",
        "default_branch": "main",
    })
    paths = sorted(files)
    if extra:
        paths = sorted(set(paths) | set(extra))
    write(base + "/git/trees/main@recursive=1.json", {"sha": "0" * 40, "tree": tree_entries(paths), "truncated": False})
    if readme is not None:
        reply = content_reply(readme, files[readme].encode())
        write(base + "/readme.json", reply)
        write(base + "/readme@ref=main.json", reply)
    write(base + "/topics.json", {"names": list(topics)})
    for path, text in files.items():
        reply = content_reply(path, text.encode())
        write(f"{base}/contents/{path}.json", reply)
        write(f"{base}/contents/{path}@ref=main.json", reply)
    return base


def main():
    shutil.rmtree(OUT, ignore_errors=True)
    record_repo("acme", "tiny", TINY, topics=["c", "example"])

    extra = ["assets/logo.png", "data/huge.bin"]
    base = record_repo("acme", "widget", widget_files(), readme="README.md",
                       topics=["data-structures", "polyglot"], extra=extra)
    png = b"\x89PNG\r\n\x1a\n\x00\x00\x00\rIHDR"
    huge = {"type": "file", "name": "huge.bin", "path": "data/huge.bin",
            "size": 10 * 1024 * 1024, "encoding": "none", "content": ""}
    for suffix in ("", "@ref=main"):
        write(f"{base}/contents/assets/logo.png{suffix}.json", content_reply("assets/logo.png", png))
        write(f"{base}/contents/data/huge.bin{suffix}.json", huge)
        write(f"{base}/contents/src{suffix}.json", [{"type": "file", "path": "src/main.c"}])


if __name__ == "__main__":
    main()
