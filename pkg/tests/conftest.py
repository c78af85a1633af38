from __future__ import annotations

import asyncio
import inspect

from hypothesis import settings

# Property runs stay modest so the whole suite finishes quickly; deadlines
# are off because several properties drive an event loop per example.
settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


def pytest_pyfunc_call(pyfuncitem):
    """Run `async def` tests on a fresh event loop per test."""
    func = pyfuncitem.obj
    if inspect.iscoroutinefunction(func):
        kwargs = {
            name: pyfuncitem.funcargs[name]
            for name in pyfuncitem._fixtureinfo.argnames
        }
        asyncio.run(func(**kwargs))
        return True
    return None
