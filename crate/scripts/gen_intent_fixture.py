#!/usr/bin/env python3
"""Writes the synthetic intent fixture used by the HIC tests.

Each class has six subject phrases and six question frames. The 36
combinations are shuffled with a fixed seed; the first 26 become training
examples and the other 10 become test items, each of which also appears a
second time with a persona prefix. Output is deterministic.
"""
import json
import random
from pathlib import Path

CLASSES = {
    "Routine Reimbursement": (
        ["办公用品费", "打印复印费", "快递费", "图书资料费", "实验耗材费", "邮寄费"],
        ["{x}可以走日常报销吗", "日常报销{x}需要哪些单据", "{x}的发票怎么粘贴", "{x}报销要找谁签字",
         "{x}在日常报销单里怎么填", "报销{x}需要提供什么材料"],
    ),
    "Reimbursement for Software Development or Purchase": (
        ["软件开发费", "软件购置费", "正版软件许可费", "软件外包服务费", "数据库订阅费", "云服务器租用费"],
        ["{x}怎么报销", "{x}报销需要签合同吗", "{x}报销要走政府采购吗", "{x}可以用科研经费报销吗",
         "报销{x}需要验收报告吗", "{x}的报销流程是什么"],
    ),
    "Inter-City Transportation Expense": (
        ["一等座火车票", "高铁二等座车票", "城际动车票", "长途汽车票", "国内航班机票", "出差往返车票"],
        ["{x}可以报销吗", "{x}的报销标准是什么", "出差买的{x}怎么报销", "{x}丢了还能报销吗",
         "{x}的改签费能报销吗", "报销{x}需要行程单吗"],
    ),
    "International Transportation Expense": (
        ["国际机票", "出国签证费", "国际航班行李费", "境外城市间交通费", "出国往返机票", "国际会议往返旅费"],
        ["{x}能报销吗", "{x}的报销规定是什么", "{x}必须选国内航空公司吗", "{x}超标了怎么办",
         "出国期间的{x}怎么报销", "{x}需要提供哪些凭证"],
    ),
    "Accommodation Expense": (
        ["出差住宿费", "酒店住宿费", "外地住宿费用", "会议期间住宿费", "学生出差住宿费", "连续多天的住宿费"],
        ["{x}每天的上限是多少", "{x}超标可以报销吗", "{x}的报销标准是多少", "{x}需要酒店水单吗",
         "一线城市的{x}标准是多少", "{x}能开普通发票吗"],
    ),
    "Field Investigation Expense": (
        ["野外考察费", "田野调查补助", "实地调研费", "野外作业伙食补助", "考察期间租车费", "调研访谈劳务费"],
        ["{x}怎么报销", "{x}的标准是多少", "{x}需要事先审批吗", "{x}可以包干使用吗",
         "申请{x}需要什么材料", "{x}能用横向经费支出吗"],
    ),
    "Conference Expense": (
        ["会议费", "学术会议注册费", "会议场地租金", "会议餐费", "会议资料印刷费", "承办会议的开支"],
        ["{x}的开支标准是多少", "{x}怎么报销", "{x}需要会议通知吗", "{x}超过标准怎么办",
         "{x}需要签到表吗", "{x}报销要附哪些材料"],
    ),
    "Expert Consultation Expense": (
        ["专家咨询费", "专家评审费", "校外专家讲课费", "专家劳务费", "咨询专家的报酬", "专家论证费"],
        ["{x}的发放标准是多少", "{x}怎么发放", "{x}需要扣个税吗", "{x}每天最多多少钱",
         "{x}可以发给本校老师吗", "{x}需要专家本人签字吗"],
    ),
    "Service Expense for Off-Campus Personnel": (
        ["校外人员劳务费", "临时用工劳务费", "校外助研津贴", "外聘人员酬金", "校外人员服务费", "外单位人员劳务报酬"],
        ["{x}怎么发放", "{x}需要签劳务合同吗", "{x}的标准是什么", "{x}怎么代扣个税",
         "{x}可以现金发放吗", "发放{x}需要身份证复印件吗"],
    ),
    "Opening Schedule of Buildings": (
        ["农园食堂", "学一食堂", "体育馆", "游泳馆", "校医院门诊", "校史馆"],
        ["{x}几点开门", "{x}几点关门", "{x}的开放时间", "{x}周末开放吗",
         "{x}的营业时间是怎样的", "{x}晚上开到几点"],
    ),
    "Service Schedule of Buildings during Holiday Period": (
        ["寒假期间图书馆", "暑假期间校医院", "春节期间食堂", "国庆假期体育馆", "寒假期间校车", "五一假期游泳馆"],
        ["{x}开放吗", "{x}的服务时间是怎样的", "{x}几点开门", "{x}有什么调整",
         "{x}正常营业吗", "{x}的安排是什么"],
    ),
}

PERSONAS = ["我是一名教授，", "我是学院的行政人员，", "我是在读博士生，", "我是新入职的老师，"]
TRAIN_PER_CLASS = 26


def main() -> None:
    rng = random.Random(20240601)
    out = Path(__file__).resolve().parent.parent / "crates" / "core" / "assets"
    train, test = [], []
    for ci, (label, (subjects, frames)) in enumerate(CLASSES.items()):
        combos = [f.format(x=s) for s in subjects for f in frames]
        rng.shuffle(combos)
        for i, text in enumerate(combos[:TRAIN_PER_CLASS]):
            train.append({"id": f"c{ci:02}-t{i:02}", "text": text + "？", "label": label})
        for i, text in enumerate(combos[TRAIN_PER_CLASS:]):
            test.append({"id": f"c{ci:02}-h{i:02}", "text": text + "？", "label": label})
            persona = PERSONAS[(ci + i) % len(PERSONAS)]
            test.append({"id": f"c{ci:02}-p{i:02}", "text": persona + text + "？", "label": label})
    for name, rows in (("intent_train.jsonl", train), ("intent_test.jsonl", test)):
        with open(out / name, "w", encoding="utf-8") as f:
            for r in rows:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")
    print(f"train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()
