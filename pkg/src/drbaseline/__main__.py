import sys

from drbaseline.cli import main

sys.exit(main())
