import sys

from countcluster import main

sys.exit(main())
