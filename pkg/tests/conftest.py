def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    rows = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) != "call":
                continue
            for name, value in getattr(rep, "user_properties", ()):
                if name == "criterion":
                    rows.append(value)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(rows):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d} {name}: {detail}")
