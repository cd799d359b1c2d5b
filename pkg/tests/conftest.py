def pytest_terminal_summary(terminalreporter):
    """Replay the acceptance gate's one-line-per-criterion summary."""
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
