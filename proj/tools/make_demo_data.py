"""Writes the demo loan dataset and synthetic predictor used by data/demo/loan_demo.cfg."""

import csv
import json
import math
import pathlib
import random

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "demo"
ROWS = 400

SUBGRADES = [g + str(i) for g in "ABCDEFG" for i in range(1, 6)]
EMPLOYMENT = ["< 1 year", "1 year"] + [f"{i} years" for i in range(2, 10)] + ["10+ years"]
PURPOSES = ["car", "credit_card", "debt_consolidation", "educational", "home_improvement", "house",
            "major_purchase", "medical", "moving", "other", "renewable_energy", "small_business",
            "vacation", "wedding"]


def row(rng):
    grade_idx = min(6, int(abs(rng.gauss(0, 1.6))))
    grade = "ABCDEFG"[grade_idx]
    rate = round(6.0 + grade_idx * 3.1 + rng.uniform(0, 3), 2)
    amount = round(rng.uniform(1600, 35000), -2)
    term = "60 months" if rng.random() < 0.25 else "36 months"
    months = 60 if term == "60 months" else 36
    r = rate / 1200
    installment = round(amount * r / (1 - (1 + r) ** -months), 2)
    income = round(math.exp(rng.gauss(11.0, 0.45)), -2)
    dti = round(min(36.41, max(1.6, rng.gauss(15, 7))), 2)
    open_acc = rng.randint(3, 27)
    return {
        "Loan Amount": amount,
        "Term": term,
        "Interest Rate": rate,
        "Installment": installment,
        "Grade": grade,
        "Sub-grade": grade + str(rng.randint(1, 5)),
        "Employment Length": "" if rng.random() < 0.03 else rng.choice(EMPLOYMENT),
        "Home Ownership": rng.choice(["MORTGAGE", "OWN", "RENT", "RENT", "MORTGAGE"]),
        "Annual Income": income,
        "Verification Status": rng.choice(["Not Verified", "Source Verified", "Verified"]),
        "Purpose": rng.choice(PURPOSES),
        "Debt-to-Income (DTI) Ratio": dti,
        "Open Credit Accounts": open_acc,
        "Public Records": rng.choice([0, 0, 0, 0, 1, 2]),
        "Revolving Balance": round(rng.uniform(169, 40000), 2),
        "Revolving Utilization Rate": round(rng.uniform(1.2, 98.0), 1),
        "Total Accounts": open_acc + rng.randint(3, 33),
        "Initial Listing Status": rng.choice(["f", "w"]),
        "Application Type": "INDIVIDUAL" if rng.random() < 0.97 else rng.choice(["DIRECT PAY", "JOINT"]),
        "Mortgage Accounts": rng.randint(0, 9),
        "Public Record Bankruptcies": 1 if rng.random() < 0.1 else 0,
    }


def truth(x):
    z = (4.2 - 0.17 * x["Interest Rate"] + 0.000006 * x["Annual Income"] - 0.03 * x["Debt-to-Income (DTI) Ratio"]
         - 0.4 * x["Public Record Bankruptcies"] - 0.6 * (x["Term"] == "60 months"))
    return 1 / (1 + math.exp(-z))


def main():
    rng = random.Random(20240131)
    OUT.mkdir(parents=True, exist_ok=True)
    rows = [row(rng) for _ in range(ROWS)]
    with open(OUT / "loan_demo.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        names = list(rows[0].keys())
        w.writerow(names + ["fully_paid"])
        for x in rows:
            w.writerow([x[n] for n in names] + [1 if rng.random() < truth(x) else 0])

    # A stand-in "LLM": partly right about the data, with a few confidently wrong claims.
    model = {
        "link": "logistic",
        "bias": 3.0,
        "weights": {
            "Interest Rate": -0.15,
            "Annual Income": 0.000004,
            "Debt-to-Income (DTI) Ratio": -0.02,
            "Revolving Utilization Rate": -0.01,
            "Loan Amount": -0.00002,
            "Open Credit Accounts": 0.02,
        },
        "category_weights": {"Term": {"36 months": 0.3, "60 months": -0.3}},
        "claims": {
            "Open Credit Accounts": "negative",
            "Installment": "negative",
            "Total Accounts": "positive",
            "Public Record Bankruptcies": "negative",
        },
    }
    with open(OUT / "loan_synthetic.json", "w") as f:
        json.dump(model, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
