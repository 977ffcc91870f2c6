"""Parses every SVG under a directory with a strict XML parser."""
import pathlib
import sys
import xml.etree.ElementTree as ET


def main() -> int:
    root = pathlib.Path(sys.argv[1])
    files = sorted(root.rglob("*.svg"))
    if not files:
        print(f"no SVG files under {root}")
        return 1
    for path in files:
        try:
            tree = ET.parse(path)
        except ET.ParseError as err:
            print(f"{path}: {err}")
            return 1
        if not tree.getroot().tag.endswith("svg"):
            print(f"{path}: root element is {tree.getroot().tag}")
            return 1
    print(f"{len(files)} SVG files parsed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
