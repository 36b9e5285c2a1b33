#!/usr/bin/env python
import sys

from occlusion_ae.cli import dispatch

if __name__ == "__main__":
    sys.exit(dispatch(sys.argv[1:]))
