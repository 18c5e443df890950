#!/usr/bin/env python3
"""
Test runner script for SPMP3D.
"""

import sys
import unittest
import os
from pathlib import Path

# Add src to path
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

# Add tests to path
tests_path = Path(__file__).parent.parent / "tests"
sys.path.insert(0, str(tests_path))


def run_tests(test_pattern=None, start_dir='.', verbose=True):
    """Run unit tests.

    Args:
        test_pattern: Pattern to match test files (default: all tests)
        start_dir: Directory under tests/ to discover from
        verbose: Whether to run in verbose mode
    """
    os.chdir(tests_path)

    loader = unittest.TestLoader()
    suite = loader.discover(start_dir, pattern=test_pattern or 'test_*.py', top_level_dir='.')

    runner = unittest.TextTestRunner(verbosity=2 if verbose else 1)
    result = runner.run(suite)

    return result.wasSuccessful()


def main():
    """Main test runner."""
    import argparse

    parser = argparse.ArgumentParser(description='Run tests for SPMP3D')
    parser.add_argument(
        '--module',
        choices=['core', 'utils', 'cli', 'all'],
        default='all',
        help='Which module to test'
    )
    parser.add_argument(
        '--pattern',
        help='Test file pattern to match'
    )
    parser.add_argument(
        '--quiet',
        action='store_true',
        help='Run in quiet mode'
    )

    args = parser.parse_args()

    print("SPMP3D - Test Runner")
    print("=" * 40)

    if args.module == 'all':
        print("Running all tests...")
        success = run_tests(args.pattern, verbose=not args.quiet)
    elif args.module == 'core':
        print("Running core module tests...")
        success = run_tests(args.pattern, 'test_core', not args.quiet)
    elif args.module == 'utils':
        print("Running utils module tests...")
        success = run_tests(args.pattern, 'test_utils', not args.quiet)
    else:
        print("Running command-line tests...")
        success = run_tests('test_main.py', verbose=not args.quiet)

    if success:
        print("\n✅ All tests passed!")
        sys.exit(0)
    else:
        print("\n❌ Some tests failed!")
        sys.exit(1)


if __name__ == '__main__':
    main()
