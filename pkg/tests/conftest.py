def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: full acceptance suite (simulation-backed, several minutes)"
    )
