from app.services.cache_service import CacheService, cached

calls = []


@cached("squares")
def squares(n):
    calls.append(n)
    return [k * k for k in range(n)]


@cached("nothing")
def nothing(n):
    calls.append(n)
    return None


def test_cache_is_a_singleton():
    """Test that every CacheService() is the same instance"""
    assert CacheService() is CacheService()


def test_cached_counts_hits_and_misses():
    """Test one miss then one hit for the same arguments"""
    calls.clear()
    cache = CacheService()
    assert squares(4) == [0, 1, 4, 9]
    assert squares(4) == [0, 1, 4, 9]
    assert calls == [4]
    assert (cache.hits, cache.misses) == (1, 1)


def test_cached_values_are_copies():
    """Test that mutating a returned value leaves the cache intact"""
    first = squares(3)
    first.append(-1)
    assert squares(3) == [0, 1, 4]


def test_none_is_not_cached():
    """Test that a None result is recomputed"""
    calls.clear()
    nothing(2)
    nothing(2)
    assert calls == [2, 2]


def test_clear_resets_counters():
    """Test that clear empties the store and the counters"""
    cache = CacheService()
    squares(5)
    squares(5)
    cache.clear()
    assert (cache.hits, cache.misses) == (0, 0)
    assert cache.get(cache.cache_key("squares", 5)) is None
