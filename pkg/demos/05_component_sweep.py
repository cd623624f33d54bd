# # How many kernel components?
#
# Refit every source kernel with D components, separate the same benchmark,
# and tabulate median metrics per D. The CSV is ready for plotting.
#
# This takes a few minutes; pass a shorter duration as the first argument to
# speed it up.

# +
import csv
import sys

from gpss import experiments, framing
from gpss.evaluation import make_benchmark, note_benchmark_spec, training_clips

duration = float(sys.argv[1]) if len(sys.argv) > 1 else 1.4
spec = note_benchmark_spec(duration=duration, seed=0)
bench = make_benchmark(spec)
clips = training_clips(spec, 1.0)
# -

rows = experiments.d_sweep(bench, clips, [1, 2, 4, 8],
                           options=framing.SeparateOptions(m_max=200))

print(" D    SDR    SIR    SAR    RMSE")
with open("d_sweep.csv", "w", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(["D", "sdr_db", "sir_db", "sar_db", "rmse"])
    for row in rows:
        md = row.medians()
        writer.writerow([row.D, md["sdr"], md["sir"], md["sar"], md["rmse"]])
        print("{:2d} {:6.2f} {:6.2f} {:6.2f} {:7.4f}".format(
            row.D, md["sdr"], md["sir"], md["sar"], md["rmse"]))
