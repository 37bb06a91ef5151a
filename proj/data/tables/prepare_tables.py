"""Regenerates the bundled CSV tables.

Sources: scikit-learn's bundled toy datasets and R datasets shipped inside the
`pydataset` package (pip install pydataset). Run from this directory.
"""
import glob
import os

import pandas as pd
from sklearn import datasets


def rdata(name):
    import pydataset

    root = os.path.join(os.path.dirname(pydataset.__file__), "resources", "rdata", "csv")
    matches = glob.glob(os.path.join(root, "*", name + ".csv"))
    frame = pd.read_csv(matches[0])
    return frame.drop(columns=[c for c in frame.columns if c.startswith("Unnamed")])


def write(frame, name):
    frame.to_csv(name + ".csv", index=False, na_rep="")
    print(name, frame.shape)


def main():
    digits = datasets.load_digits()
    frame = pd.DataFrame(digits.data.astype(int), columns=[f"px_{r}_{c}" for r in range(8) for c in range(8)])
    frame["digit"] = digits.target
    write(frame, "digits")

    cancer = datasets.load_breast_cancer()
    frame = pd.DataFrame(cancer.data, columns=[c.replace(" ", "_") for c in cancer.feature_names])
    frame["diagnosis"] = [cancer.target_names[t] for t in cancer.target]
    write(frame, "breast_cancer")

    wine = datasets.load_wine()
    frame = pd.DataFrame(wine.data, columns=wine.feature_names)
    frame["cultivar"] = [f"class_{t}" for t in wine.target]
    write(frame, "wine")

    diabetes = datasets.load_diabetes(scaled=False)
    frame = pd.DataFrame(diabetes.data, columns=diabetes.feature_names)
    frame["progression"] = diabetes.target
    write(frame, "diabetes")

    write(pd.concat([rdata("Pima.tr"), rdata("Pima.te")], ignore_index=True), "pima")
    write(rdata("vote92"), "vote92")
    write(rdata("biopsy").drop(columns=["ID"]), "biopsy")
    write(rdata("Chile"), "chile")
    write(rdata("Schooling"), "schooling")
    write(rdata("epi"), "epi")
    write(rdata("mexico").drop(columns=["one"]), "mexico")
    write(rdata("bfi"), "bfi")


if __name__ == "__main__":
    main()
