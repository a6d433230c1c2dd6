import sys

from netmeter.cli import main

sys.exit(main())
