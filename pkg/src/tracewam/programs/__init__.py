"""Benchmark suite sources and their stored answers."""
