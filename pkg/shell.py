#!/usr/bin/env python

from lsilab import cli

if __name__ == "__main__":
    cli.app()
