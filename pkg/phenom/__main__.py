import sys

from phenom.cli import main

sys.exit(main())
