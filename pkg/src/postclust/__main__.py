import sys

from postclust.cli import main

sys.exit(main())
