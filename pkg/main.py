#!/usr/local/bin/python
from reaction_learn.cli import run

if __name__ == "__main__":
    run()
