import sys

from aquitrans.cli import main

sys.exit(main())
