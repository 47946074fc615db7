import copy
import logging
import time
from functools import wraps
from threading import Lock


class InMemoryCache:
    def __init__(self):
        self._cache = {}
        self._lock = Lock()
        self.logger = logging.getLogger(__name__)

    def get(self, key):
        """Return the cached value, or None when missing or expired"""
        with self._lock:
            if key in self._cache:
                value, expiry = self._cache[key]
                if expiry > time.time():
                    return value
                else:
                    del self._cache[key]
        return None

    def set(self, key, value, expire_in_seconds=3600):
        """Store a value with an expiry"""
        with self._lock:
            expiry = time.time() + expire_in_seconds
            self._cache[key] = (value, expiry)
            return True

    def delete(self, key):
        """Remove a value"""
        with self._lock:
            if key in self._cache:
                del self._cache[key]
                return True
        return False

    def clear(self):
        with self._lock:
            self._cache.clear()

    def cleanup(self):
        """Drop expired entries"""
        with self._lock:
            current_time = time.time()
            expired_keys = [
                key for key, (_, expiry) in self._cache.items()
                if expiry <= current_time
            ]
            for key in expired_keys:
                del self._cache[key]


class CacheService:
    """Process-wide cache for expensive, deterministic numerical setup.

    Sweeps evaluate the same reference-extension parameters and potential
    suprema from several worker threads; values are deep-copied on the way
    in and out so callers never share mutable arrays.
    """

    _instance = None
    _lock = Lock()

    def __new__(cls):
        """Thread-safe singleton"""
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super(CacheService, cls).__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if not self._initialized:
            self.cache = InMemoryCache()
            self.logger = logging.getLogger(__name__)
            self.hits = 0
            self.misses = 0
            self._initialized = True

    def cache_key(self, prefix, *args, **kwargs):
        """Build a key from the repr of the arguments"""
        parts = [repr(arg) for arg in args]
        parts += [f"{name}={value!r}" for name, value in sorted(kwargs.items())]
        return f"{prefix}:{':'.join(parts)}"

    def get(self, key):
        try:
            value = self.cache.get(key)
            if value is not None:
                self.hits += 1
                self.logger.debug(f"Cache hit for key: {key}")
                return copy.deepcopy(value)
            self.misses += 1
            self.logger.debug(f"Cache miss for key: {key}")
        except Exception as e:
            self.logger.error(f"Error while reading the cache: {str(e)}")
        return None

    def set(self, key, value, expire_in_seconds=3600):
        try:
            success = self.cache.set(key, copy.deepcopy(value), expire_in_seconds)
            if success:
                self.logger.debug(f"Value cached for key: {key}")
            return success
        except Exception as e:
            self.logger.error(f"Error while writing the cache: {str(e)}")
            return False

    def delete(self, key):
        try:
            return self.cache.delete(key)
        except Exception as e:
            self.logger.error(f"Error while deleting from the cache: {str(e)}")
            return False

    def clear(self):
        self.cache.clear()
        self.hits = 0
        self.misses = 0


def cached(prefix, expire_in_seconds=3600):
    """
    Memoize a pure function in the shared cache

    :param prefix: key prefix
    :param expire_in_seconds: lifetime of an entry
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            cache = CacheService()
            cache_key = cache.cache_key(prefix, *args, **kwargs)

            cached_result = cache.get(cache_key)
            if cached_result is not None:
                return cached_result

            result = func(*args, **kwargs)
            cache.set(cache_key, result, expire_in_seconds)
            return result
        return wrapper
    return decorator
