"""Builds a small on-disk deployment (streets, cameras, boards, config) for engine tests."""
import json
from pathlib import Path


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1))
    return str(path)


def deployment(root, frames_path, segments=None, cameras=None, boards=None, graph=None, tunables=None,
               **extra):
    """Write config files under ``root`` and return the config path.

    ``segments`` is a list of street dicts; each gets camera ``cam-<id>`` unless
    ``cameras`` is given. One file-sink board at node "A" by default.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    segments = segments or [{"segment_id": "a", "name": "Main St", "lanes": 2, "length_m": 140,
                             "free_flow_speed_mps": 14, "threshold": 40}]
    cameras = cameras or {f"cam-{s['segment_id']}": s["segment_id"] for s in segments}
    boards = boards or [{"board_id": "vms-1", "location": "A", "rows": 3, "cols": 32,
                         "endpoint": f"file://{root / 'board-vms-1.jsonl'}"}]
    cfg = {
        "streets": write_json(root / "streets.json", segments),
        "cameras": write_json(root / "cameras.json", cameras),
        "boards": write_json(root / "boards.json", boards),
        "input": f"file://{frames_path}" if not str(frames_path).startswith("tcp://") else str(frames_path),
        "history": "history.jsonl",
        "transitions_log": "transitions.jsonl",
        "anomaly_log": "anomalies.jsonl",
    }
    if graph is not None:
        cfg["graph"] = write_json(root / "graph.json", graph)
    if tunables:
        cfg["tunables"] = tunables
    cfg.update(extra)
    return write_json(root / "config.json", cfg)


def read_jsonl(path):
    p = Path(path)
    if not p.exists():
        return []
    return [json.loads(line) for line in p.read_text().splitlines() if line.strip()]


def frame_line(camera_id, ts, n_cars, extra=()):
    dets = [{"class": "car", "confidence": 0.9, "box": {"x": 10 * (i % 60), "y": 10 * (i // 60), "w": 8, "h": 8}}
            for i in range(n_cars)]
    dets += list(extra)
    return json.dumps({"camera_id": camera_id, "timestamp_ms": ts, "image_w": 640, "image_h": 640,
                       "detections": dets})
