import sys

from selectcond.main import main

sys.exit(main())
