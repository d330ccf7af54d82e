import sys

from mdselect.cli import main

sys.exit(main())
