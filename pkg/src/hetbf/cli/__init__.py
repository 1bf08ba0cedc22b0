"""Command-line tools and file formats."""
