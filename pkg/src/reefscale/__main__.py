import sys

from reefscale.cli import main

sys.exit(main())
