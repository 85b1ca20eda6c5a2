#!/usr/bin/env python3
"""Reference external despeckler: 1-look intensity |s|^2.

Usage: ext_intensity.py INPUT.mcslc OUTPUT.refl
"""
import sys

import numpy as np

from muchapro.io import read_mcslc_raw, write_reflectivity


def main(argv):
    if len(argv) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    s = read_mcslc_raw(argv[0]).astype(np.complex128)
    if s.shape[0] != 1:
        print(f"expected D=1, got D={s.shape[0]}", file=sys.stderr)
        return 1
    write_reflectivity(argv[1], np.abs(s[0]) ** 2)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
