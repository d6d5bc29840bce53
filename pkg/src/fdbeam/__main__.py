import sys

from fdbeam.cli import main

sys.exit(main())
