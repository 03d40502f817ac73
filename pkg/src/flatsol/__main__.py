import sys

from flatsol.harness import main

sys.exit(main())
