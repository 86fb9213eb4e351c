import sys

from flowrisk.cli import main

sys.exit(main())
