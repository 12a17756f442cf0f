"""Error-detection scoring: metrics, and sampling cases for experience building.

Simulates a detector that confuses two error types, computes accuracy and
macro precision/recall against a confusion-matrix mental model, and samples a
balanced set of correct/incorrect cases per type (the raw material the weaver
would distill).
"""

import random

from expweave import DetectionOutcome, detection_metrics, select_training_cases


def main():
    rng = random.Random(9)
    types = ["Improper Terminology Usage", "Missing Section", "Laterality Mixup"]
    outcomes = []
    for i in range(300):
        truth = rng.choice(types)
        if truth == "Laterality Mixup" and rng.random() < 0.45:
            predicted = "Improper Terminology Usage"   # systematic confusion
        elif rng.random() < 0.15:
            predicted = rng.choice(types)
        else:
            predicted = truth
        outcomes.append(DetectionOutcome(f"case{i:03d}", truth, predicted))

    accuracy, macro_p, macro_r = detection_metrics(outcomes)
    print(f"cases: {len(outcomes)}")
    print(f"accuracy        : {accuracy:.3f}")
    print(f"macro precision : {macro_p:.3f}")
    print(f"macro recall    : {macro_r:.3f}")

    selected = select_training_cases(outcomes, n_correct=10, n_incorrect=10, seed=7)
    print(f"\nsampled {len(selected)} training cases (10 correct + 10 wrong per type):")
    for error_type in types:
        mine = [o for o in selected if o.true_error_type == error_type]
        wrong = sum(1 for o in mine if o.predicted_error_type != o.true_error_type)
        print(f"  {error_type}: {len(mine)} cases, {wrong} misdetected")


if __name__ == "__main__":
    main()
