import sys

from sqmc.cli import main

sys.exit(main())
