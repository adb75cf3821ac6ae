import sys

from mimolink.cli import main

sys.exit(main())
