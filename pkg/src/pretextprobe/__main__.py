from pretextprobe.cli import entry

entry()
