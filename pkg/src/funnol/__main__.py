import sys

from funnol.cli import main

sys.exit(main())
