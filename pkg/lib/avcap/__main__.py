# -*- coding: utf-8 -*-
import sys

from avcap.commands import main

sys.exit(main())
