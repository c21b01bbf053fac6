import sys

from hessquot.cli import main

sys.exit(main())
