#!/usr/bin/env python3
"""
Simple script to verify the band and covariance cache
"""

import json
import sys

from cache_store import CacheStore
from exceptions import CacheError


def main(cache_dir: str = None) -> bool:
    print("🔍 Cache Verification")
    print("=" * 30)

    store = CacheStore(cache_dir)

    stats = store.get_cache_stats()
    print(f"📊 Cache Stats: {stats}")

    entries = store.list_entries()
    if not entries:
        print("📭 No cache files found")
        return True

    print(f"\n📄 Found {len(entries)} files:")
    ok = True
    for i, entry in enumerate(entries, 1):
        print(f"\n{i}. {entry['file']}")
        if "error" in entry:
            print(f"   ❌ Unreadable: {entry['error']}")
            ok = False
            continue
        print(f"   Kind: {entry.get('kind', 'Unknown')}")
        print(f"   Size: {entry.get('bytes', 0)} bytes")
        header = {k: v for k, v in entry.items() if k not in ("file", "bytes")}
        print(f"   Header: {json.dumps(header, indent=2)}")

        try:
            print(f"   ✅ Checksum OK, {store.verify_file(entry['file'])}")
        except CacheError as e:
            print(f"   ❌ {e}")
            ok = False

    print(f"\n{'✅ Cache verified' if ok else '❌ Cache has problems'}")
    return ok


if __name__ == "__main__":
    success = main(sys.argv[1] if len(sys.argv) > 1 else None)
    sys.exit(0 if success else 1)
