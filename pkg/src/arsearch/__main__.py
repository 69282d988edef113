import sys

from arsearch.cli import main

sys.exit(main())
