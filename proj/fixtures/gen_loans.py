#!/usr/bin/env python3
"""Regenerates fixtures/loans.csv deterministically.

The generated table is tuned so that the sample loan-officer conversation
yields round, recognisable figures: the credit-score>500 total, the three
highest borrower averages and the high-income/low-credit record count.
"""
import random
import sys

SEED = 20200207
TARGET_SUM_CREDIT_GT_500 = 137_368_000
TARGET_LOW_CREDIT_HIGH_INCOME = 82
FEATURED = [("J. Smith", 584_917), ("V. Doe", 575_692), ("Y. Doe", 557_615)]


def main(path):
    rng = random.Random(SEED)
    initials = "ABCDEFGHIKLMNOPRSTW"
    surnames = ["Adams", "Baker", "Clark", "Diaz", "Evans", "Fox", "Green",
                "Hill", "Ito", "Jones", "King", "Lopez", "Moore", "Nguyen",
                "Ortiz", "Patel", "Reed", "Stone", "Turner", "Wong", "Allen",
                "Brooks", "Cruz", "Dunn", "Ellis", "Ford", "Gray", "Hayes",
                "Irwin", "James", "Kerr", "Lane", "Marsh", "Nash", "Owens",
                "Price", "Quinn", "Ross", "Shaw", "Tate"]
    borrowers = sorted({f"{rng.choice(initials)}. {rng.choice(surnames)}"
                        for _ in range(2000)})
    rows = []
    for b in borrowers:
        for _ in range(rng.randint(1, 5)):
            rows.append({
                "borrower": b,
                "loan_amount": rng.randrange(2_000, 300_000, 1),
                "credit_score": rng.randint(150, 850),
                "yearly_income": rng.randrange(18_000, 220_000, 500),
                "term_months": rng.choice([12, 24, 36, 48, 60, 120, 180, 360]),
            })
    # Featured borrowers: two loans each, averaging exactly the target.
    for name, avg in FEATURED:
        rows.append({"borrower": name, "loan_amount": avg + 15_083,
                     "credit_score": 420, "yearly_income": 240_000,
                     "term_months": 360})
        rows.append({"borrower": name, "loan_amount": avg - 15_083,
                     "credit_score": 480, "yearly_income": 240_000,
                     "term_months": 360})
    # Exactly the target number of high-income, very-low-credit loans.
    low = [r for r in rows if r["yearly_income"] > 50_000 and r["credit_score"] < 150]
    assert not low
    candidates = [r for r in rows
                  if r["yearly_income"] > 50_000 and r["credit_score"] <= 500
                  and r["borrower"] not in dict(FEATURED)]
    rng.shuffle(candidates)
    for r in candidates[:TARGET_LOW_CREDIT_HIGH_INCOME]:
        r["credit_score"] = rng.randint(100, 149)
    # Trim the credit>500 total below target, then top up with one loan.
    def total():
        return sum(r["loan_amount"] for r in rows if r["credit_score"] > 500)
    high = [r for r in rows if r["credit_score"] > 500]
    rng.shuffle(high)
    while total() > TARGET_SUM_CREDIT_GT_500 - 50_000:
        high.pop()["credit_score"] = rng.randint(300, 500)
    rows.append({"borrower": "Q. Allen",
                 "loan_amount": TARGET_SUM_CREDIT_GT_500 - total(),
                 "credit_score": 712, "yearly_income": 96_000,
                 "term_months": 60})
    assert total() == TARGET_SUM_CREDIT_GT_500
    rng.shuffle(rows)
    with open(path, "w") as out:
        out.write("loan_id:integer,borrower:text,loan_amount:integer,"
                  "credit_score:integer,yearly_income:integer,term_months:integer\n")
        for i, r in enumerate(rows, start=1):
            out.write(f"{i},{r['borrower']},{r['loan_amount']},{r['credit_score']},"
                      f"{r['yearly_income']},{r['term_months']}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "loans.csv")
