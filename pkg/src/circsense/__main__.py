import sys

from circsense.cli import main

sys.exit(main())
