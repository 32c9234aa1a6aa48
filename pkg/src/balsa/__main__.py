import sys

from balsa.cli import main

sys.exit(main())
