import sys

from emweak.cli import main

sys.exit(main())
