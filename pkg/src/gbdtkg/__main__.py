import sys

from gbdtkg.cli import main

sys.exit(main())
