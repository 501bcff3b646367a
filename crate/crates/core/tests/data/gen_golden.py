"""Regenerates the AIVDM golden fixture with pyais as the reference decoder.

    pip install pyais==3.3.0
    python3 gen_golden.py

Writes aivdm_golden.nmea (20 sentences) and aivdm_golden.json (expected
position reports as raw integers, exactly as transmitted).
"""
import json

from pyais import decode
from pyais.encode import encode_dict
from pyais.stream import ByteStream

sentences = [
    # Public sample sentences.
    "!AIVDM,1,1,,B,177KQJ5000G?tO`K>RA1wUbN0TKH,0*5C",
    "!AIVDM,1,1,,A,13aEOK?P00PD2wVMdLDRhgvL289?,0*26",
    "!AIVDM,1,1,,B,16S`2cPP00a3UF6EKT@2:?vOr0S2,0*00",
]

def enc(data, channel="A"):
    return encode_dict(data, radio_channel=channel, talker_id="AI", sentence_type="VDM")

sentences += enc({"msg_type": 1, "mmsi": 316001234, "lat": 44.6488, "lon": -63.5752, "speed": 0.2, "course": 123.4, "status": 5, "heading": 120})
sentences += enc({"msg_type": 2, "mmsi": 244123456, "lat": 51.9500, "lon": 4.1400, "speed": 14.3, "course": 271.9, "heading": 272}, "B")
sentences += enc({"msg_type": 3, "mmsi": 265000111, "lat": 57.6900, "lon": 11.8600, "speed": 0.0, "course": 0.0, "heading": 511})
sentences += enc({"msg_type": 1, "mmsi": 123456789, "lat": -33.9100, "lon": 18.4200, "speed": 21.7, "course": 359.9, "heading": 0})
sentences += enc({"msg_type": 1, "mmsi": 503000001, "lat": -37.8400, "lon": 144.9100, "speed": 8.8, "course": 45.5, "heading": 45}, "B")
sentences += enc({"msg_type": 18, "mmsi": 316009876, "lat": 46.1400, "lon": -60.1900, "speed": 6.5, "course": 88.1, "heading": 90})
sentences += enc({"msg_type": 18, "mmsi": 316005555, "lat": 45.6300, "lon": -61.3600, "speed": 0.1, "course": 200.0, "heading": 511}, "B")
sentences += enc({"msg_type": 3, "mmsi": 316007777, "lat": 47.5600, "lon": -52.7100, "speed": 3.3, "course": 10.0, "heading": 12})
sentences += enc({"msg_type": 1, "mmsi": 258000444, "lat": 60.3900, "lon": 5.3200, "speed": 0.0, "course": 77.7, "heading": 78}, "B")
# Unavailable sentinels: decoded by the reference, dropped by the pipeline.
sentences += enc({"msg_type": 1, "mmsi": 316000001, "lat": 91.0, "lon": 181.0, "speed": 102.3, "course": 360.0, "heading": 511})
sentences += enc({"msg_type": 1, "mmsi": 636012345, "lat": 23.1300, "lon": -82.3600, "speed": 12.0, "course": 180.0, "heading": 180}, "B")
sentences += enc({"msg_type": 2, "mmsi": 710000222, "lat": -23.9700, "lon": -46.3000, "speed": 0.4, "course": 12.3, "heading": 15})
sentences += enc({"msg_type": 18, "mmsi": 412000333, "lat": 31.2300, "lon": 121.4700, "speed": 17.6, "course": 300.0, "heading": 301})
# Non-position types: skipped by the pipeline.
sentences += enc({"msg_type": 4, "mmsi": 3160001, "lat": 44.6, "lon": -63.5, "year": 2024, "month": 4, "day": 2, "hour": 10, "minute": 0, "second": 0})
sentences += enc({"msg_type": 5, "mmsi": 316001234, "shipname": "NOVA TRADER", "callsign": "CFA1234", "destination": "HALIFAX", "imo": 9123456, "shiptype": 70}, "B")
sentences += enc({"msg_type": 24, "mmsi": 316009876, "partno": 0, "shipname": "CANSO FEEDER"})

expected = []
with open("aivdm_golden.nmea", "w") as f:
    for s in sentences:
        f.write(s + "\n")

for msg in ByteStream([s.encode() for s in sentences]):
    d = msg.decode().asdict()
    t = d["msg_type"]
    if t not in (1, 2, 3, 18):
        continue
    expected.append({
        "msg_type": t,
        "mmsi": d["mmsi"],
        "lat_raw": round(d["lat"] * 600000),
        "lon_raw": round(d["lon"] * 600000),
        "sog_raw": round(d["speed"] * 10),
        "cog_raw": round(d["course"] * 10),
    })

lines = sum(1 for _ in open("aivdm_golden.nmea"))
assert lines == 20, lines
with open("aivdm_golden.json", "w") as f:
    json.dump({"sentences": lines, "position_reports": expected}, f, indent=2)
    f.write("\n")
