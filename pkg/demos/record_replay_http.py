# The remote path, end to end, without any real model server:
# 1. serve two toy models behind the HTTP wire protocol,
# 2. decode through the remote adapter while recording every exchange,
# 3. shut the servers down and replay the decode fully offline.
#
# The same recording flow produced the offline fixture committed under
# tests/fixtures/.

from pathlib import Path

from chared import DecoderConfig, decode
from chared.providers import RecordingProvider, RemoteProvider, record_replay
from chared.fixtures import walkthrough_pair
from chared.stub_server import serve_toy_model

m1, m2 = walkthrough_pair()
server1, url1 = serve_toy_model(m1)
server2, url2 = serve_toy_model(m2)
print(f"toy backends listening at {url1} and {url2}")

store1 = Path(__file__).with_name("recorded_m1.jsonl")
store2 = Path(__file__).with_name("recorded_m2.jsonl")
for store in (store1, store2):
    store.unlink(missing_ok=True)

config = DecoderConfig(alpha=0.45, mode="greedy", max_atoms=16)
live = decode(
    config,
    providers=(
        RecordingProvider(RemoteProvider(url1), store1),
        RecordingProvider(RemoteProvider(url2), store2),
    ),
)
print(f"live decode over HTTP: {live.text!r} ({live.termination})")

server1.shutdown()
server2.shutdown()
print("servers stopped; replaying from the recorded stores only")

offline = decode(
    config,
    providers=(
        record_replay(None, store1, "replay"),
        record_replay(None, store2, "replay"),
    ),
)
print(f"offline replay:        {offline.text!r} ({offline.termination})")
assert offline.text == live.text

print(f"\nrecorded exchanges ({store1.name}):")
for line in store1.read_text().splitlines():
    print(" ", line)
