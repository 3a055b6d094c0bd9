import sys

from aeroarm.cli import main

sys.exit(main())
