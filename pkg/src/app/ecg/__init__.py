from src.app.ecg.records import EcgRecord, read_ecg_csv, write_ecg_csv
from src.app.ecg.synth import GroundTruthBeats, synth_ecg
