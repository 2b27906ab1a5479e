#!/usr/bin/env python3
"""Writes the tar layer fixtures and prints the expected flattened image digest."""
import hashlib
import io
import struct
import sys
import tarfile
from pathlib import Path

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")


def add(tar, name, kind, mode, data=b"", target=""):
    info = tarfile.TarInfo(name)
    info.mode = mode
    info.mtime = 1700000000
    if kind == "dir":
        info.type = tarfile.DIRTYPE
        tar.addfile(info)
    elif kind == "symlink":
        info.type = tarfile.SYMTYPE
        info.linkname = target
        tar.addfile(info)
    else:
        info.size = len(data)
        tar.addfile(info, io.BytesIO(data))


def layer(path, entries, fmt=tarfile.USTAR_FORMAT):
    with tarfile.open(path, "w", format=fmt) as tar:
        for e in entries:
            add(tar, *e)


sh = bytes((i * 7) % 251 for i in range(5000))
long_name = "opt/" + "d" * 120 + "/file.txt"
layer(OUT / "layer1.tar", [
    ("bin", "dir", 0o755),
    ("bin/sh", "file", 0o755, sh),
    ("etc", "dir", 0o755),
    ("etc/hosts", "file", 0o644, b"127.0.0.1 localhost\n"),
    ("var", "dir", 0o755),
    ("var/cache", "dir", 0o755),
    ("var/cache/a", "file", 0o644, b"a"),
])
layer(OUT / "layer2.tar", [
    ("etc/.wh.hosts", "file", 0o644),
    ("etc/passwd", "file", 0o600, b"root:x:0:0\n"),
    ("bin/bash", "symlink", 0o777, b"", "sh"),
    ("var/cache/.wh..wh..opq", "file", 0o644),
    ("opt", "dir", 0o755),
    ("opt/" + "d" * 120, "dir", 0o755),
    (long_name, "file", 0o644, b"long\n"),
], fmt=tarfile.PAX_FORMAT)

# Independent flattening of the merged tree: (path, kind, mode, content).
KIND = {"file": 0, "dir": 1, "symlink": 2}
tree = sorted([
    ("bin", "dir", 0o755, b""),
    ("bin/bash", "symlink", 0o777, b"sh"),
    ("bin/sh", "file", 0o755, sh),
    ("etc", "dir", 0o755, b""),
    ("etc/passwd", "file", 0o600, b"root:x:0:0\n"),
    ("opt", "dir", 0o755, b""),
    ("opt/" + "d" * 120, "dir", 0o755, b""),
    (long_name, "file", 0o644, b"long\n"),
    ("var", "dir", 0o755, b""),
    ("var/cache", "dir", 0o755, b""),
])
PAGE = 4096
up = lambda v: (v + PAGE - 1) // PAGE * PAGE
table = sum(2 + len(p) + 1 + 2 + 24 for p, *_ in tree)
cursor = up(16 + table)
head = b"FIMG" + struct.pack("<IQ", 1, len(tree))
body = bytearray()
for p, kind, mode, content in tree:
    off = 0
    if content:
        off = cursor
        cursor = up(cursor + len(content))
    head += struct.pack("<H", len(p)) + p.encode() + struct.pack("<BHQQQ", KIND[kind], mode, 0, off, len(content))
img = bytearray(head.ljust(up(len(head)), b"\0"))
for p, kind, mode, content in tree:
    if content:
        img = img.ljust(up(len(img)), b"\0") + content
img = bytes(img.ljust(cursor, b"\0"))
print(len(img), hashlib.sha256(img).hexdigest())
