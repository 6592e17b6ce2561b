import sys

from ipfsched.cli import main

sys.exit(main())
