import sys

from qlimit.cli import main

sys.exit(main())
