"""The 35-bit clinical footprint layout.

Order: sex, age band (one-hot over four levels), nine comorbidities,
nineteen symptoms, hospitalization, death.
"""

from .schema import Variable, VariableSchema

AGE_GROUP = "age"
AGE_LEVELS = ("age_lt20", "age_20_40", "age_40_60", "age_ge60")
AGE_BINS = ((0, 20), (20, 40), (40, 60), (60, None))

COMORBIDITIES = (
    "chronic_kidney_failure",
    "copd",
    "heart_disease",
    "diabetes",
    "immunosuppression",
    "hypertension",
    "obesity",
    "smoking",
    "asthma",
)

SYMPTOMS = (
    "fever",
    "cough",
    "ear_pain",
    "difficulty_breathing",
    "irritability",
    "diarrhea",
    "chest_pain",
    "chills",
    "headache",
    "muscle_pain",
    "joint_pain",
    "general_malaise",
    "nasal_discharge",
    "rapid_breathing",
    "vomiting",
    "abdominal_pain",
    "conjunctivitis",
    "cyanosis",
    "sudden_onset",
)

OUTCOMES = ("hospitalized", "death")

DEFAULT_PREDICTORS = ("male", AGE_GROUP, "diabetes", "hypertension", "difficulty_breathing", "hospitalized")
DEFAULT_TARGET = "death"


def footprint_schema() -> VariableSchema:
    variables = [Variable("male", "sex")]
    variables += [Variable(name, "age", AGE_GROUP) for name in AGE_LEVELS]
    variables += [Variable(name, "comorbidity") for name in COMORBIDITIES]
    variables += [Variable(name, "symptom") for name in SYMPTOMS]
    variables += [Variable(name, "outcome") for name in OUTCOMES]
    return VariableSchema(tuple(variables))
